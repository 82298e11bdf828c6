"""In-memory RGB image buffer plus PNG/JPEG decode and PNG encode."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ValidationError


@dataclass
class ImageBuffer:
    """Row-major RGB, 8 bits per channel; pixels shape (height, width, 3)."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("image dimensions must be positive")
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValidationError(
                f"pixel array shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )
        if self.pixels.dtype != np.uint8:
            raise ValidationError("pixels must be uint8")

    @classmethod
    def from_array(cls, pixels: np.ndarray) -> "ImageBuffer":
        return cls(width=pixels.shape[1], height=pixels.shape[0], pixels=pixels)

    def same_pixels(self, other: "ImageBuffer") -> bool:
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.pixels, other.pixels)
        )


def decode_image(data: bytes) -> ImageBuffer:
    """Decode PNG or JPEG bytes to an RGB buffer."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except Exception as exc:
        raise ValidationError(f"cannot decode image: {exc}") from exc
    return ImageBuffer.from_array(arr.copy())


def encode_png(img: ImageBuffer) -> bytes:
    """Encode losslessly as PNG (avoids recompression drift)."""
    out = io.BytesIO()
    Image.fromarray(img.pixels, mode="RGB").save(out, format="PNG")
    return out.getvalue()
