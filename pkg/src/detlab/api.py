"""HTTP surface: every workflow behind a bearer-token JSON API.

All failures use one envelope: {"status", "code", "message", "details"}.
Uploads are raw request bodies (bit-exact, no multipart). Job events stream
as server-sent ``data:`` lines, one JSON object per event, with comment
heartbeats so idle proxies keep the connection alive.
"""

from __future__ import annotations

import json
import queue
import threading
from pathlib import Path
from typing import Iterator

from fastapi import Depends, FastAPI, Header, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import __version__
from .augment import AugmentationPlan
from .errors import (
    AuthError,
    ConflictError,
    CorruptionError,
    DetlabError,
    MappingError,
    NotFoundError,
    ParseError,
    PathSecurityError,
    QuotaError,
    StateError,
    ValidationError,
)
from .export_viz import RenderSpec
from .metrics import Detection
from .pipeline_config import (
    Architecture,
    Backbone,
    HyperParams,
    LrSchedule,
    ModelSpec,
    TrainingConfig,
    catalog,
)
from .service import Service
from .workspace import Workspace

_STATUS_BY_ERROR = [
    (AuthError, 401),
    (NotFoundError, 404),
    (ConflictError, 409),
    (StateError, 409),
    (QuotaError, 413),
    (PathSecurityError, 400),
    (ParseError, 422),
    (MappingError, 422),
    (CorruptionError, 422),
    (ValidationError, 422),
]


def _error_response(status: int, code: str, message: str, details=None):
    return JSONResponse(
        status_code=status,
        content={
            "status": status,
            "code": code,
            "message": message,
            "details": details or [],
        },
    )


class AccountBody(BaseModel):
    display_name: str
    password: str


class LrBody(BaseModel):
    initial_rate: float
    decay_points: list[tuple[int, float]] = Field(default_factory=list)


class AugmentBody(BaseModel):
    enabled_ops: list[str] = Field(default_factory=list)
    fraction: float = 0.5
    seed: int = 0
    brightness_delta: float = 0.2
    contrast_factor: float = 1.25
    saturation_factor: float = 1.25

    def to_plan(self) -> AugmentationPlan:
        return AugmentationPlan(
            enabled_ops=tuple(self.enabled_ops),
            fraction=self.fraction,
            seed=self.seed,
            brightness_delta=self.brightness_delta,
            contrast_factor=self.contrast_factor,
            saturation_factor=self.saturation_factor,
        )


class HpBody(BaseModel):
    num_steps: int
    num_classes: int
    lr: LrBody
    batch_size: int = 1
    checkpoint_every: int = 100
    augmentation: AugmentBody | None = None


class ModelBody(BaseModel):
    architecture: str
    backbone: str


class JobBody(BaseModel):
    model: ModelBody
    hp: HpBody
    labelmap_path: str
    train_record_path: str
    eval_record_path: str
    extras: dict[str, str] = Field(default_factory=dict)
    seed: int = 0

    def to_config(self) -> TrainingConfig:
        errors = []
        architecture = backbone = None
        try:
            architecture = Architecture(self.model.architecture)
        except ValueError:
            errors.append(f"model.architecture: unknown '{self.model.architecture}'")
        try:
            backbone = Backbone(self.model.backbone)
        except ValueError:
            errors.append(f"model.backbone: unknown '{self.model.backbone}'")
        if errors:
            raise ValidationError("invalid model spec", details=errors)
        return TrainingConfig(
            model=ModelSpec(architecture, backbone),
            hp=HyperParams(
                num_steps=self.hp.num_steps,
                num_classes=self.hp.num_classes,
                lr=LrSchedule(
                    self.hp.lr.initial_rate, tuple(self.hp.lr.decay_points)
                ),
                batch_size=self.hp.batch_size,
                checkpoint_every=self.hp.checkpoint_every,
                augmentation=(
                    self.hp.augmentation.to_plan() if self.hp.augmentation else None
                ),
            ),
            labelmap_path=self.labelmap_path,
            train_record_path=self.train_record_path,
            eval_record_path=self.eval_record_path,
            extras=dict(self.extras),
        )


class PreprocessBody(BaseModel):
    annotation_format: str
    annotations_prefix: str | None = None
    annotation_paths: list[str] | None = None
    images_prefix: str = ""
    split_ratio: float = 0.8
    split_seed: int = 0
    augment: AugmentBody | None = None
    labelmap_path: str = "out/labelmap.txt"
    train_record_path: str = "out/train.record"
    eval_record_path: str = "out/eval.record"


class EvaluationBody(BaseModel):
    detections_path: str
    annotation_format: str
    labelmap_path: str
    protocol: str = "coco_50_95"
    annotations_prefix: str | None = None
    annotation_paths: list[str] | None = None


class ExportBody(BaseModel):
    checkpoint_step: int


class DetectionBody(BaseModel):
    image_id: str = ""
    box: tuple[float, float, float, float]
    class_id: int
    score: float


class RenderBody(BaseModel):
    image_path: str
    labelmap_path: str
    detections: list[DetectionBody] | None = None
    detections_path: str | None = None
    score_threshold: float = 0.5
    line_thickness: int = 2


def create_app(service: Service) -> FastAPI:
    app = FastAPI(title="detlab", version=__version__)

    # -- error envelope ------------------------------------------------

    @app.exception_handler(DetlabError)
    async def handle_domain_error(request: Request, exc: DetlabError):
        for error_type, status in _STATUS_BY_ERROR:
            if isinstance(exc, error_type):
                return _error_response(status, exc.code, exc.message, exc.details)
        return _error_response(400, exc.code, exc.message, exc.details)

    @app.exception_handler(RequestValidationError)
    async def handle_request_validation(request: Request, exc: RequestValidationError):
        details = [
            ".".join(str(part) for part in err.get("loc", ())) + ": " + err.get("msg", "")
            for err in exc.errors()
        ]
        return _error_response(422, "validation", "invalid request body", details)

    @app.exception_handler(StarletteHTTPException)
    async def handle_http_error(request: Request, exc: StarletteHTTPException):
        return _error_response(exc.status_code, "http_error", str(exc.detail))

    # -- auth ------------------------------------------------------------

    def current_workspace(authorization: str | None = Header(None)) -> Workspace:
        if not authorization or not authorization.startswith("Bearer "):
            raise AuthError("missing bearer token")
        user_id = service.store.resolve_token(authorization[len("Bearer "):])
        return service.store.workspace_for_user(user_id)

    # -- accounts ----------------------------------------------------------

    @app.post("/api/accounts", status_code=201)
    def create_account(body: AccountBody):
        account, workspace = service.store.create_account(
            body.display_name, body.password
        )
        return {
            "user_id": account.user_id,
            "display_name": account.display_name,
            "workspace_id": workspace.workspace_id,
            "quota_bytes": workspace.quota_bytes,
        }

    @app.post("/api/sessions")
    def login(body: AccountBody):
        token = service.store.authenticate(body.display_name, body.password)
        return {"token": token, "ttl_seconds": service.config.token_ttl_seconds}

    # -- files ----------------------------------------------------------

    @app.get("/api/files")
    def list_files(
        prefix: str | None = None, ws: Workspace = Depends(current_workspace)
    ):
        return {
            "files": [
                {
                    "rel_path": f.rel_path,
                    "size_bytes": f.size_bytes,
                    "checksum": f.checksum,
                    "kind": f.kind,
                }
                for f in service.store.list_files(ws.workspace_id, prefix)
            ],
            "used_bytes": service.store.get_workspace(ws.workspace_id).used_bytes,
            "quota_bytes": ws.quota_bytes,
        }

    @app.put("/api/files/{rel_path:path}")
    async def put_file(
        rel_path: str, request: Request, ws: Workspace = Depends(current_workspace)
    ):
        content = await request.body()
        stored = service.store.put_file(ws.workspace_id, rel_path, content)
        return {
            "rel_path": stored.rel_path,
            "size_bytes": stored.size_bytes,
            "checksum": stored.checksum,
            "kind": stored.kind,
        }

    @app.get("/api/files/{rel_path:path}")
    def get_file(rel_path: str, ws: Workspace = Depends(current_workspace)):
        content = service.store.get_file(ws.workspace_id, rel_path)
        return Response(content=content, media_type="application/octet-stream")

    @app.delete("/api/files/{rel_path:path}", status_code=204)
    def delete_file(rel_path: str, ws: Workspace = Depends(current_workspace)):
        service.store.delete_file(ws.workspace_id, rel_path)

    # -- preprocessing ----------------------------------------------------

    @app.post("/api/preprocess")
    def preprocess(body: PreprocessBody, ws: Workspace = Depends(current_workspace)):
        return service.preprocess(
            ws.workspace_id,
            annotation_format=body.annotation_format,
            annotations_prefix=body.annotations_prefix,
            annotation_paths=body.annotation_paths,
            images_prefix=body.images_prefix,
            split_ratio=body.split_ratio,
            split_seed=body.split_seed,
            augment_plan=body.augment.to_plan() if body.augment else None,
            labelmap_path=body.labelmap_path,
            train_record_path=body.train_record_path,
            eval_record_path=body.eval_record_path,
        )

    # -- models / catalog ---------------------------------------------------

    @app.get("/api/catalog")
    def get_catalog():
        return {
            "pairs": [
                {"architecture": a.value, "backbone": b.value} for a, b in catalog()
            ]
        }

    # -- jobs ------------------------------------------------------------

    @app.post("/api/jobs", status_code=201)
    def create_job(body: JobBody, ws: Workspace = Depends(current_workspace)):
        job = service.jobs.create_job(ws.workspace_id, body.to_config(), body.seed)
        return job.to_dict()

    @app.get("/api/jobs")
    def list_jobs(ws: Workspace = Depends(current_workspace)):
        return {"jobs": [j.to_dict() for j in service.jobs.list_jobs(ws.workspace_id)]}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str, ws: Workspace = Depends(current_workspace)):
        return service.jobs.get_job_for_workspace(job_id, ws.workspace_id).to_dict()

    @app.post("/api/jobs/{job_id}/start")
    def start_job(job_id: str, ws: Workspace = Depends(current_workspace)):
        service.jobs.get_job_for_workspace(job_id, ws.workspace_id)
        entry = service.jobs.start_job(job_id)
        job = service.jobs.get_job(job_id)
        return {"job": job.to_dict(), "queue_position": entry.position}

    @app.post("/api/jobs/{job_id}/cancel")
    def cancel_job(job_id: str, ws: Workspace = Depends(current_workspace)):
        service.jobs.get_job_for_workspace(job_id, ws.workspace_id)
        return service.jobs.cancel_job(job_id).to_dict()

    @app.get("/api/jobs/{job_id}/events")
    def stream_job_events(
        job_id: str, from_seq: int = 0, ws: Workspace = Depends(current_workspace)
    ):
        service.jobs.get_job_for_workspace(job_id, ws.workspace_id)
        heartbeat = service.config.heartbeat_seconds

        def event_stream() -> Iterator[str]:
            feed: queue.Queue = queue.Queue()

            def pump():
                for seq, event in service.jobs.stream_events(job_id, from_seq):
                    feed.put((seq, event))
                feed.put(None)

            worker = threading.Thread(target=pump, daemon=True)
            worker.start()
            while True:
                try:
                    item = feed.get(timeout=heartbeat)
                except queue.Empty:
                    yield ": heartbeat\n\n"
                    continue
                if item is None:
                    return
                seq, event = item
                payload = json.dumps(
                    {"seq": seq, "event": event}, sort_keys=True,
                    separators=(",", ":"),
                )
                yield f"data: {payload}\n\n"

        return StreamingResponse(event_stream(), media_type="text/event-stream")

    # -- evaluation ---------------------------------------------------------

    @app.post("/api/evaluations")
    def evaluate(body: EvaluationBody, ws: Workspace = Depends(current_workspace)):
        report, table = service.evaluate_detections(
            ws.workspace_id,
            detections_path=body.detections_path,
            annotation_format=body.annotation_format,
            labelmap_path=body.labelmap_path,
            protocol=body.protocol,
            annotations_prefix=body.annotations_prefix,
            annotation_paths=body.annotation_paths,
        )
        result = report.to_dict()
        result["table"] = table
        return result

    # -- export / render ------------------------------------------------------

    @app.post("/api/jobs/{job_id}/export")
    def export_job(
        job_id: str, body: ExportBody, ws: Workspace = Depends(current_workspace)
    ):
        export_id, bundle = service.export_checkpoint(
            ws.workspace_id, job_id, body.checkpoint_step
        )
        return {
            "export_id": export_id,
            "bundle_dir": bundle.bundle_dir,
            "manifest": bundle.manifest,
        }

    @app.get("/api/exports/{export_id}/archive")
    def export_archive(export_id: str, ws: Workspace = Depends(current_workspace)):
        payload = service.export_archive(ws.workspace_id, export_id)
        return Response(
            content=payload,
            media_type="application/zip",
            headers={
                "Content-Disposition": f'attachment; filename="{export_id}.zip"'
            },
        )

    @app.post("/api/render")
    def render(body: RenderBody, ws: Workspace = Depends(current_workspace)):
        if body.detections is not None:
            detections = [
                Detection(d.image_id, tuple(d.box), d.class_id, d.score)
                for d in body.detections
            ]
        elif body.detections_path is not None:
            detections = service.load_detections(ws.workspace_id, body.detections_path)
        else:
            raise ValidationError("detections or detections_path required")
        payload = service.render_to_png(
            ws.workspace_id,
            body.image_path,
            detections,
            body.labelmap_path,
            RenderSpec(
                score_threshold=body.score_threshold,
                line_thickness=body.line_thickness,
            ),
        )
        return Response(content=payload, media_type="image/png")

    # -- scheduler ------------------------------------------------------------

    @app.get("/api/scheduler/status")
    def scheduler_status(ws: Workspace = Depends(current_workspace)):
        status = service.scheduler.status()
        return {
            "capacity": status.capacity,
            "free_gpus": status.free_gpus,
            "active": [
                {"job_id": l.job_id, "gpu_id": l.gpu_id} for l in status.active
            ],
            "queued": [
                {"job_id": e.job_id, "position": e.position} for e in status.queued
            ],
        }

    # -- static console ---------------------------------------------------

    console_dir = service.config.console_dir
    if console_dir and Path(console_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")

    return app
