"""Composition root: configuration plus the preprocess/evaluate/export flows
that span several modules. The HTTP layer and the CLI both sit on top of
this so behavior cannot drift between surfaces.
"""

from __future__ import annotations

import io
import json
import os
import zipfile
from dataclasses import dataclass
from pathlib import Path

from .augment import AugmentationPlan, apply_plan
from .errors import NotFoundError, ValidationError
from .export_viz import ExportBundle, RenderSpec, export_bundle, render_detections
from .images import ImageBuffer, decode_image, encode_png
from .ingest import (
    AnnotatedImage,
    build_labelmap,
    parse_annotation_csv,
    parse_labelmap_text,
    parse_voc_xml,
    render_labelmap_text,
    split_dataset,
    validate_dataset,
)
from .jobs import JobManager
from .metrics import (
    Detection,
    MetricsReport,
    Protocol,
    evaluate,
    render_report_table,
)
from .records import encode_detection_example, write_records
from .scheduler import GpuScheduler
from .workspace import DEFAULT_QUOTA_BYTES, WorkspaceStore


@dataclass
class ServiceConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8420
    storage_root: str = "./detlab-data"
    gpu_pool_size: int = 1
    default_quota_bytes: int = DEFAULT_QUOTA_BYTES
    token_ttl_seconds: float = 24 * 3600
    heartbeat_seconds: float = 15.0
    cancel_grace_seconds: float = 10.0
    pbkdf2_iterations: int = 60_000
    trainer_cmd: list[str] | None = None
    console_dir: str | None = None  # static console bundle served at /

    _ENV_PREFIX = "DETLAB_"

    @classmethod
    def load(cls, path: str | Path | None = None) -> "ServiceConfig":
        """Read the JSON config file, then apply DETLAB_* env overrides."""
        values: dict = {}
        if path is not None:
            values.update(json.loads(Path(path).read_text("utf-8")))
        config = cls(**values)
        for name, caster in (
            ("listen_host", str),
            ("listen_port", int),
            ("storage_root", str),
            ("gpu_pool_size", int),
            ("default_quota_bytes", int),
            ("token_ttl_seconds", float),
            ("heartbeat_seconds", float),
            ("cancel_grace_seconds", float),
            ("pbkdf2_iterations", int),
            ("console_dir", str),
        ):
            raw = os.environ.get(cls._ENV_PREFIX + name.upper())
            if raw is not None:
                setattr(config, name, caster(raw))
        return config


class Service:
    def __init__(self, config: ServiceConfig | None = None):
        self.config = config or ServiceConfig()
        root = Path(self.config.storage_root)
        self.store = WorkspaceStore(
            root / "workspaces",
            default_quota_bytes=self.config.default_quota_bytes,
            token_ttl_seconds=self.config.token_ttl_seconds,
            pbkdf2_iterations=self.config.pbkdf2_iterations,
        )
        self.scheduler = GpuScheduler(pool_size=self.config.gpu_pool_size)
        self.jobs = JobManager(
            self.store,
            self.scheduler,
            root / "jobs",
            trainer_cmd=self.config.trainer_cmd,
            cancel_grace_seconds=self.config.cancel_grace_seconds,
        )
        self._exports: dict[str, tuple[str, str]] = {}  # id -> (workspace, dir)

    # -- preprocessing ---------------------------------------------------

    def _load_annotations(
        self,
        workspace_id: str,
        annotation_format: str,
        annotations_prefix: str | None,
        annotation_paths: list[str] | None,
    ) -> list[AnnotatedImage]:
        if annotation_paths is None:
            if annotations_prefix is None:
                raise ValidationError(
                    "either annotations_prefix or annotation_paths is required"
                )
            wanted = ".xml" if annotation_format == "voc_xml" else ".csv"
            annotation_paths = [
                f.rel_path
                for f in self.store.list_files(workspace_id, annotations_prefix)
                if f.rel_path.lower().endswith(wanted)
            ]
        if not annotation_paths:
            raise ValidationError("no annotation files found")

        images: list[AnnotatedImage] = []
        for rel_path in annotation_paths:
            content = self.store.get_file(workspace_id, rel_path)
            if annotation_format == "voc_xml":
                images.append(parse_voc_xml(content))
            elif annotation_format == "csv":
                images.extend(parse_annotation_csv(content))
            else:
                raise ValidationError(
                    f"unknown annotation format '{annotation_format}'"
                )
        return images

    @staticmethod
    def _image_format(filename: str) -> str:
        lower = filename.lower()
        if lower.endswith((".jpg", ".jpeg")):
            return "jpeg"
        return "png"

    def preprocess(
        self,
        workspace_id: str,
        annotation_format: str,
        annotations_prefix: str | None = None,
        annotation_paths: list[str] | None = None,
        images_prefix: str = "",
        split_ratio: float = 0.8,
        split_seed: int = 0,
        augment_plan: AugmentationPlan | None = None,
        labelmap_path: str = "out/labelmap.txt",
        train_record_path: str = "out/train.record",
        eval_record_path: str = "out/eval.record",
    ) -> dict:
        """Annotations + images -> labelmap, train/eval records, report."""
        images = self._load_annotations(
            workspace_id, annotation_format, annotations_prefix, annotation_paths
        )
        available = {
            f.rel_path[len(images_prefix):]
            for f in self.store.list_files(workspace_id, images_prefix or None)
            if f.kind == "image"
        }
        report = validate_dataset(images, available)
        if not report.ok:
            raise ValidationError(
                "dataset validation failed",
                details=report.missing_images
                + report.invalid_boxes
                + [f"duplicate: {name}" for name in report.duplicate_filenames],
            )

        labelmap = build_labelmap(images)
        split = split_dataset(images, split_ratio, split_seed)

        def loader(filename: str) -> ImageBuffer:
            return decode_image(
                self.store.get_file(workspace_id, images_prefix + filename)
            )

        plan = augment_plan or AugmentationPlan(enabled_ops=(), fraction=0.0)
        samples = apply_plan(split, plan, loader)

        out_dir = str(Path(train_record_path).parent).replace("\\", "/")
        augmented_dir = f"{out_dir}/augmented" if out_dir != "." else "augmented"

        train_payloads = []
        for sample in samples:
            if sample.buffer is None:
                image_bytes = self.store.get_file(
                    workspace_id, images_prefix + sample.annotated.filename
                )
                image_format = self._image_format(sample.annotated.filename)
            else:
                image_bytes = encode_png(sample.buffer)
                image_format = "png"
                self.store.put_file(
                    workspace_id,
                    f"{augmented_dir}/{sample.annotated.filename}",
                    image_bytes,
                )
            train_payloads.append(
                encode_detection_example(
                    sample.annotated, image_bytes, image_format, labelmap
                )
            )

        eval_payloads = []
        for annotated in split.eval:
            image_bytes = self.store.get_file(
                workspace_id, images_prefix + annotated.filename
            )
            eval_payloads.append(
                encode_detection_example(
                    annotated,
                    image_bytes,
                    self._image_format(annotated.filename),
                    labelmap,
                )
            )

        train_sink, eval_sink = io.BytesIO(), io.BytesIO()
        train_stats = write_records(train_sink, train_payloads)
        eval_stats = write_records(eval_sink, eval_payloads)

        self.store.put_file(
            workspace_id, labelmap_path, render_labelmap_text(labelmap).encode()
        )
        self.store.put_file(workspace_id, train_record_path, train_sink.getvalue())
        self.store.put_file(workspace_id, eval_record_path, eval_sink.getvalue())

        return {
            "labelmap_path": labelmap_path,
            "train_record_path": train_record_path,
            "eval_record_path": eval_record_path,
            "classes": [name for _, name in labelmap.entries],
            "train_count": train_stats.record_count,
            "eval_count": eval_stats.record_count,
            "augmented_count": sum(1 for s in samples if s.buffer is not None),
            "report": report.to_dict(),
        }

    # -- evaluation --------------------------------------------------------

    def load_detections(self, workspace_id: str, rel_path: str) -> list[Detection]:
        raw = self.store.get_file(workspace_id, rel_path)
        try:
            entries = json.loads(raw)
            return [
                Detection(
                    image_id=e["image_id"],
                    box=tuple(e["box"]),
                    class_id=int(e["class_id"]),
                    score=float(e["score"]),
                )
                for e in entries
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad detections file: {exc}") from exc

    def evaluate_detections(
        self,
        workspace_id: str,
        detections_path: str,
        annotation_format: str,
        labelmap_path: str,
        protocol: str,
        annotations_prefix: str | None = None,
        annotation_paths: list[str] | None = None,
    ) -> tuple[MetricsReport, str]:
        """Score a detections file against annotation ground truth."""
        try:
            proto = Protocol(protocol)
        except ValueError:
            raise ValidationError(f"unknown protocol '{protocol}'") from None
        detections = self.load_detections(workspace_id, detections_path)
        labelmap = parse_labelmap_text(
            self.store.get_file(workspace_id, labelmap_path).decode("utf-8")
        )
        images = self._load_annotations(
            workspace_id, annotation_format, annotations_prefix, annotation_paths
        )
        ids = labelmap.ids_by_name()
        ground_truth: dict = {}
        for img in images:
            entries = []
            for box in img.boxes:
                if box.class_name not in ids:
                    raise ValidationError(
                        f"class '{box.class_name}' missing from labelmap"
                    )
                entries.append(
                    (
                        (
                            box.xmin / img.width,
                            box.ymin / img.height,
                            box.xmax / img.width,
                            box.ymax / img.height,
                        ),
                        ids[box.class_name],
                    )
                )
            ground_truth[img.filename] = entries
        report = evaluate(detections, ground_truth, proto, set(ids.values()))
        table = render_report_table(report, labelmap.names_by_id())
        return report, table

    # -- export and rendering ----------------------------------------------

    def export_checkpoint(
        self, workspace_id: str, job_id: str, checkpoint_step: int
    ) -> tuple[str, ExportBundle]:
        bundle = export_bundle(
            self.store, self.jobs, workspace_id, job_id, checkpoint_step
        )
        export_id = f"{job_id}-step{checkpoint_step}"
        self._exports[export_id] = (workspace_id, bundle.bundle_dir)
        return export_id, bundle

    def export_archive(self, workspace_id: str, export_id: str) -> bytes:
        entry = self._exports.get(export_id)
        if entry is None or entry[0] != workspace_id:
            raise NotFoundError(f"no such export: {export_id}")
        _, bundle_dir = entry
        buffer = io.BytesIO()
        with zipfile.ZipFile(buffer, "w", zipfile.ZIP_DEFLATED) as archive:
            for stored in self.store.list_files(workspace_id, bundle_dir):
                archive.writestr(
                    stored.rel_path[len(bundle_dir) + 1 :],
                    self.store.get_file(workspace_id, stored.rel_path),
                )
        return buffer.getvalue()

    def render_to_png(
        self,
        workspace_id: str,
        image_path: str,
        detections: list[Detection],
        labelmap_path: str,
        spec: RenderSpec | None = None,
    ) -> bytes:
        img = decode_image(self.store.get_file(workspace_id, image_path))
        labelmap = parse_labelmap_text(
            self.store.get_file(workspace_id, labelmap_path).decode("utf-8")
        )
        rendered = render_detections(img, detections, labelmap, spec)
        return encode_png(rendered)
