"""Face image type and PNG/tensor conversions.

Images are 3x256x256, channels-first, values in [-1, 1]. Files on disk are
8-bit RGB PNG mapped linearly to that range.
"""

from __future__ import annotations

import base64
import io
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from reenact.errors import StructuralError

IMAGE_SIZE = 256
IMAGE_CHANNELS = 3


class FaceImage:
    """A 3x256x256 face image with values in [-1, 1]."""

    __slots__ = ("pixels",)

    def __init__(self, pixels: np.ndarray):
        arr = np.asarray(pixels, dtype=np.float32)
        if arr.shape != (IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE):
            raise StructuralError(
                f"face image must have shape ({IMAGE_CHANNELS}, {IMAGE_SIZE}, {IMAGE_SIZE}), "
                f"got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise StructuralError("face image contains non-finite values")
        self.pixels = arr

    @classmethod
    def from_uint8(cls, rgb: np.ndarray) -> "FaceImage":
        """Map an HxWx3 uint8 array linearly onto [-1, 1]."""
        if rgb.shape != (IMAGE_SIZE, IMAGE_SIZE, IMAGE_CHANNELS):
            raise StructuralError(f"expected {IMAGE_SIZE}x{IMAGE_SIZE}x3 uint8 image, got {rgb.shape}")
        arr = rgb.astype(np.float32) / 127.5 - 1.0
        return cls(np.transpose(arr, (2, 0, 1)))

    def to_uint8(self) -> np.ndarray:
        """Quantize back to HxWx3 uint8, clipping to the valid range."""
        arr = np.transpose(self.pixels, (1, 2, 0))
        return np.clip((arr + 1.0) * 127.5, 0.0, 255.0).round().astype(np.uint8)

    @classmethod
    def load_png(cls, path: str | Path) -> "FaceImage":
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"))
        return cls.from_uint8(rgb)

    def save_png(self, path: str | Path) -> None:
        Image.fromarray(self.to_uint8()).save(path, format="PNG")

    @classmethod
    def from_png_bytes(cls, data: bytes) -> "FaceImage":
        try:
            with Image.open(io.BytesIO(data)) as img:
                rgb = np.asarray(img.convert("RGB"))
        except Exception as exc:
            raise StructuralError(f"could not decode PNG image: {exc}") from exc
        if rgb.shape[:2] != (IMAGE_SIZE, IMAGE_SIZE):
            raise StructuralError(
                f"expected a {IMAGE_SIZE}x{IMAGE_SIZE} image, got {rgb.shape[1]}x{rgb.shape[0]}"
            )
        return cls.from_uint8(rgb)

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.to_uint8()).save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_base64_png(cls, data: str) -> "FaceImage":
        try:
            raw = base64.b64decode(data, validate=True)
        except Exception as exc:
            raise StructuralError(f"invalid base64 image payload: {exc}") from exc
        return cls.from_png_bytes(raw)

    def to_base64_png(self) -> str:
        return base64.b64encode(self.to_png_bytes()).decode("ascii")

    def to_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return torch.from_numpy(self.pixels).to(dtype)

    @classmethod
    def from_tensor(cls, t: torch.Tensor) -> "FaceImage":
        if t.dim() == 4:
            if t.shape[0] != 1:
                raise StructuralError(f"expected a single image, got batch of {t.shape[0]}")
            t = t[0]
        return cls(t.detach().cpu().numpy())

    def __eq__(self, other) -> bool:
        return isinstance(other, FaceImage) and np.array_equal(self.pixels, other.pixels)
