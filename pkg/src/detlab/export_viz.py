"""Checkpoint export bundles and detection overlay rendering.

A bundle is a plain workspace directory: checkpoint payload, the rendered
pipeline config, the labelmap text, and a ``manifest.json`` whose
``content_hashes`` cover every other file, so integrity is re-checkable
after download. Rendering draws axis-aligned rectangles and a
``name: score`` caption with the embedded bitmap font: deterministic
pixels, no external font dependencies.
"""

from __future__ import annotations

import colorsys
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import PurePosixPath

from . import bitmapfont
from .errors import NotFoundError, ValidationError
from .images import ImageBuffer
from .ingest import LabelMap, render_labelmap_text
from .jobs import JobManager, TrainingJob
from .metrics import Detection
from .pipeline_config import render_config
from .workspace import WorkspaceStore


@dataclass
class RenderSpec:
    score_threshold: float = 0.5
    line_thickness: int = 2
    with_captions: bool = True

    def __post_init__(self):
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValidationError("score_threshold must be in [0, 1]")
        if self.line_thickness < 1:
            raise ValidationError("line_thickness must be >= 1")


def class_color(class_id: int) -> tuple[int, int, int]:
    """Deterministic palette: golden-angle hue walk, saturated and bright."""
    hue = (class_id * 0.61803398875) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.95, 0.95)
    return int(r * 255), int(g * 255), int(b * 255)


def _denorm(value: float, extent: int) -> int:
    return int(value * (extent - 1) + 0.5)  # round half up onto pixel grid


def render_detections(
    img: ImageBuffer,
    dets: list[Detection],
    labelmap: LabelMap,
    spec: RenderSpec | None = None,
) -> ImageBuffer:
    spec = spec or RenderSpec()
    names = labelmap.names_by_id()
    for det in dets:
        if det.class_id not in names:
            raise ValidationError(f"class_id {det.class_id} not in labelmap")

    pixels = img.pixels.copy()
    height, width = img.height, img.width
    for det in dets:
        if det.score < spec.score_threshold:
            continue
        color = class_color(det.class_id)
        x0, y0 = _denorm(det.box[0], width), _denorm(det.box[1], height)
        x1, y1 = _denorm(det.box[2], width), _denorm(det.box[3], height)
        t = spec.line_thickness
        pixels[y0 : min(y0 + t, y1 + 1), x0 : x1 + 1] = color  # top
        pixels[max(y1 - t + 1, y0) : y1 + 1, x0 : x1 + 1] = color  # bottom
        pixels[y0 : y1 + 1, x0 : min(x0 + t, x1 + 1)] = color  # left
        pixels[y0 : y1 + 1, max(x1 - t + 1, x0) : x1 + 1] = color  # right
        if spec.with_captions:
            caption = f"{names[det.class_id]}: {det.score:.2f}"
            text_y = y0 - bitmapfont.GLYPH_HEIGHT - 1
            if text_y < 0:
                text_y = y0 + spec.line_thickness + 1  # clamp inside the image
            text_x = max(0, min(x0, width - bitmapfont.text_width(caption)))
            bitmapfont.draw_text(pixels, text_x, text_y, caption, color)
    return ImageBuffer.from_array(pixels)


@dataclass
class ExportBundle:
    bundle_dir: str
    manifest: dict = field(default_factory=dict)


def _sha256(content: bytes) -> str:
    return hashlib.sha256(content).hexdigest()


def export_bundle(
    store: WorkspaceStore,
    manager: JobManager,
    workspace_id: str,
    job_id: str,
    checkpoint_step: int,
    labelmap: LabelMap | None = None,
) -> ExportBundle:
    """Materialize an inference-ready bundle from a recorded checkpoint."""
    job: TrainingJob = manager.get_job_for_workspace(job_id, workspace_id)
    matching = [(s, p) for s, p in job.checkpoints if s == checkpoint_step]
    if not matching:
        raise NotFoundError(
            f"job {job_id} has no checkpoint at step {checkpoint_step}"
        )
    _, checkpoint_path = matching[-1]  # latest snapshot wins for a step
    checkpoint_bytes = store.get_file(workspace_id, checkpoint_path)

    if labelmap is None:
        text = store.get_file(workspace_id, job.config.labelmap_path)
        from .ingest import parse_labelmap_text

        labelmap = parse_labelmap_text(text.decode("utf-8"))

    bundle_dir = f"exports/{job_id}/step-{checkpoint_step}"
    files = {
        f"{bundle_dir}/{PurePosixPath(checkpoint_path).name}": checkpoint_bytes,
        f"{bundle_dir}/pipeline.txt": render_config(job.config).encode(),
        f"{bundle_dir}/labelmap.txt": render_labelmap_text(labelmap).encode(),
    }
    content_hashes = {
        PurePosixPath(path).name: _sha256(content) for path, content in files.items()
    }
    manifest = {
        "job_id": job_id,
        "model": {
            "architecture": job.config.model.architecture.value,
            "backbone": job.config.model.backbone.value,
        },
        "checkpoint_step": checkpoint_step,
        "labelmap": [{"id": i, "name": n} for i, n in labelmap.entries],
        "created_at": time.time(),
        "content_hashes": content_hashes,
    }
    for path, content in files.items():
        store.put_file(workspace_id, path, content, kind="export")
    store.put_file(
        workspace_id,
        f"{bundle_dir}/manifest.json",
        json.dumps(manifest, indent=2, sort_keys=True).encode(),
        kind="export",
    )
    return ExportBundle(bundle_dir=bundle_dir, manifest=manifest)


def verify_bundle(store: WorkspaceStore, workspace_id: str, bundle_dir: str) -> bool:
    """Re-hash every manifest-listed file; True when all digests match."""
    manifest = json.loads(
        store.get_file(workspace_id, f"{bundle_dir}/manifest.json")
    )
    for name, expected in manifest["content_hashes"].items():
        content = store.get_file(workspace_id, f"{bundle_dir}/{name}")
        if _sha256(content) != expected:
            return False
    return True
