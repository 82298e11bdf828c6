"""Seeded data augmentation with bounding-box co-transforms.

Geometric ops (horizontal flip, 90-degree clockwise rotation) are pure index
permutations on pixels, so repeating them round-trips exactly. Box inputs and
outputs are normalized [0, 1] coordinate tuples (xmin, ymin, xmax, ymax).
Photometric ops round half-up and clamp to [0, 255]; boxes are untouched.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .images import ImageBuffer
from .ingest import AnnotatedImage, BoundingBox, DatasetSplit

Box = tuple[float, float, float, float]

AUGMENT_OPS = ("flip_h", "rotate90", "brightness", "contrast", "saturation")
_OP_SUFFIX = {
    "flip_h": "_fliph",
    "rotate90": "_rot90",
    "brightness": "_bright",
    "contrast": "_contrast",
    "saturation": "_sat",
}


@dataclass
class AugmentationPlan:
    enabled_ops: tuple[str, ...] = ()
    fraction: float = 0.5
    seed: int = 0
    brightness_delta: float = 0.2
    contrast_factor: float = 1.25
    saturation_factor: float = 1.25

    def __post_init__(self):
        unknown = [op for op in self.enabled_ops if op not in AUGMENT_OPS]
        if unknown:
            raise ValidationError(f"unknown augmentation op(s): {unknown}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValidationError("fraction must be in [0, 1]")
        if not -1.0 <= self.brightness_delta <= 1.0:
            raise ValidationError("brightness_delta must be in [-1, 1]")
        if self.contrast_factor <= 0:
            raise ValidationError("contrast_factor must be > 0")
        if self.saturation_factor < 0:
            raise ValidationError("saturation_factor must be >= 0")


def _as_boxes(boxes: Iterable[Sequence[float]]) -> list[Box]:
    return [(b[0], b[1], b[2], b[3]) for b in boxes]


def flip_horizontal(
    img: ImageBuffer, boxes: Iterable[Sequence[float]]
) -> tuple[ImageBuffer, list[Box]]:
    flipped = ImageBuffer.from_array(img.pixels[:, ::-1].copy())
    out = [(1.0 - x2, y1, 1.0 - x1, y2) for (x1, y1, x2, y2) in _as_boxes(boxes)]
    return flipped, out


def rotate_90_cw(
    img: ImageBuffer, boxes: Iterable[Sequence[float]]
) -> tuple[ImageBuffer, list[Box]]:
    # source pixel (x, y) lands at (height-1-y, x); output is height x width
    rotated = ImageBuffer.from_array(
        np.transpose(img.pixels, (1, 0, 2))[:, ::-1].copy()
    )
    out = [(1.0 - y2, x1, 1.0 - y1, x2) for (x1, y1, x2, y2) in _as_boxes(boxes)]
    return rotated, out


def _round_clamp(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def adjust_brightness(img: ImageBuffer, delta: float) -> ImageBuffer:
    if not -1.0 <= delta <= 1.0:
        raise ValidationError("delta must be in [-1, 1]")
    shifted = img.pixels.astype(np.float64) + 255.0 * delta
    return ImageBuffer.from_array(_round_clamp(shifted))


def adjust_contrast(img: ImageBuffer, factor: float) -> ImageBuffer:
    if factor <= 0:
        raise ValidationError("factor must be > 0")
    pixels = img.pixels.astype(np.float64)
    means = pixels.mean(axis=(0, 1))  # per channel over the whole image
    stretched = (pixels - means) * factor + means
    return ImageBuffer.from_array(_round_clamp(stretched))


def adjust_saturation(img: ImageBuffer, factor: float) -> ImageBuffer:
    if factor < 0:
        raise ValidationError("factor must be >= 0")
    pixels = img.pixels.astype(np.float64)
    gray = 0.299 * pixels[..., 0] + 0.587 * pixels[..., 1] + 0.114 * pixels[..., 2]
    mixed = gray[..., None] + factor * (pixels - gray[..., None])
    return ImageBuffer.from_array(_round_clamp(mixed))


@dataclass
class TrainSample:
    """One train-set entry: an original (buffer None) or an augmented copy."""

    annotated: AnnotatedImage
    buffer: ImageBuffer | None = None
    source_filename: str | None = None  # original this copy derives from


def _normalize(img: AnnotatedImage) -> list[Box]:
    return [
        (b.xmin / img.width, b.ymin / img.height, b.xmax / img.width, b.ymax / img.height)
        for b in img.boxes
    ]


def _denormalize(
    boxes: list[Box], names: list[str], width: int, height: int
) -> list[BoundingBox]:
    return [
        BoundingBox(x1 * width, y1 * height, x2 * width, y2 * height, name)
        for (x1, y1, x2, y2), name in zip(boxes, names)
    ]


def _apply_op(
    op: str, img: ImageBuffer, annotated: AnnotatedImage, plan: AugmentationPlan
) -> tuple[ImageBuffer, AnnotatedImage]:
    names = [b.class_name for b in annotated.boxes]
    boxes = _normalize(annotated)
    stem, dot, ext = annotated.filename.rpartition(".")
    base = stem if dot else annotated.filename
    new_name = f"{base}{_OP_SUFFIX[op]}.png"

    if op == "flip_h":
        out_img, out_boxes = flip_horizontal(img, boxes)
        width, height = annotated.width, annotated.height
    elif op == "rotate90":
        out_img, out_boxes = rotate_90_cw(img, boxes)
        width, height = annotated.height, annotated.width
    else:
        if op == "brightness":
            out_img = adjust_brightness(img, plan.brightness_delta)
        elif op == "contrast":
            out_img = adjust_contrast(img, plan.contrast_factor)
        else:
            out_img = adjust_saturation(img, plan.saturation_factor)
        out_boxes, width, height = boxes, annotated.width, annotated.height

    new_annotated = AnnotatedImage(
        new_name, width, height, _denormalize(out_boxes, names, width, height)
    )
    return out_img, new_annotated


def apply_plan(
    split: DatasetSplit,
    plan: AugmentationPlan,
    loader: Callable[[str], ImageBuffer],
) -> list[TrainSample]:
    """Augment a seeded fraction of the train split; eval is untouched.

    Originals come first (in split order, buffers None); augmented copies are
    appended, one per enabled op per selected image, in selection order. A
    failing loader aborts with the offending filename.
    """
    samples = [TrainSample(annotated=img) for img in split.train]
    count = int(plan.fraction * len(split.train))
    if count == 0 or not plan.enabled_ops:
        return samples

    rng = random.Random(plan.seed)
    selected = sorted(rng.sample(range(len(split.train)), count))
    ops = [op for op in AUGMENT_OPS if op in plan.enabled_ops]
    for index in selected:
        annotated = split.train[index]
        try:
            img = loader(annotated.filename)
        except Exception as exc:
            raise ValidationError(
                f"cannot load train image '{annotated.filename}': {exc}"
            ) from exc
        for op in ops:
            out_img, out_annotated = _apply_op(op, img, annotated, plan)
            samples.append(
                TrainSample(
                    annotated=out_annotated,
                    buffer=out_img,
                    source_filename=annotated.filename,
                )
            )
    return samples
