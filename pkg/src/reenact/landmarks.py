"""Landmark data types, normalization, rasterization and point-space ops.

A landmark set is 106 (x, y) points normalized to the face crop, so that
(0, 0) is the crop's top-left corner and (1, 1) its bottom-right. The
rasterizer turns a landmark set into the single-channel geometry image
consumed by the generator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from reenact.errors import DomainError, StructuralError

LANDMARK_COUNT = 106
LANDMARK_FORMAT_VERSION = 1
DEFAULT_RASTER_SIZE = 64


@dataclass(frozen=True)
class FacePart:
    """A facial part drawn as one polyline through the given point indices."""

    name: str
    indices: tuple[int, ...]
    closed: bool = False


# Index convention used by the synthetic dataset; real datasets declare their
# own grouping in the manifest.
DEFAULT_GROUPING: tuple[FacePart, ...] = (
    FacePart("jaw", tuple(range(0, 33))),
    FacePart("brow_l", tuple(range(33, 42))),
    FacePart("brow_r", tuple(range(42, 51))),
    FacePart("nose", tuple(range(51, 66))),
    FacePart("eye_l", tuple(range(66, 76)), closed=True),
    FacePart("eye_r", tuple(range(76, 86)), closed=True),
    FacePart("lip_outer", tuple(range(86, 98)), closed=True),
    FacePart("lip_inner", tuple(range(98, 106)), closed=True),
)


class Landmark:
    """106 (x, y) coordinate pairs in normalized face-crop space.

    Values outside [0, 1] are permitted transiently (converter output may
    overshoot) and are reported by :meth:`in_unit_range` rather than
    rejected.
    """

    __slots__ = ("points",)

    def __init__(self, points: np.ndarray | Iterable):
        arr = np.asarray(points, dtype=np.float64)
        if arr.shape != (LANDMARK_COUNT, 2):
            raise StructuralError(
                f"landmark must have shape ({LANDMARK_COUNT}, 2), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise StructuralError("landmark contains non-finite coordinates")
        self.points = arr

    def in_unit_range(self) -> bool:
        return bool(np.all(self.points >= 0.0) and np.all(self.points <= 1.0))

    def copy(self) -> "Landmark":
        return Landmark(self.points.copy())

    def __eq__(self, other) -> bool:
        return isinstance(other, Landmark) and np.array_equal(self.points, other.points)

    def __repr__(self) -> str:
        return f"Landmark({LANDMARK_COUNT} points, in_unit_range={self.in_unit_range()})"

    def to_json(self) -> dict:
        return {"version": LANDMARK_FORMAT_VERSION, "points": self.points.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "Landmark":
        if not isinstance(doc, dict) or "points" not in doc:
            raise StructuralError("landmark document must be an object with a 'points' field")
        version = doc.get("version")
        if version != LANDMARK_FORMAT_VERSION:
            raise StructuralError(f"unsupported landmark format version: {version!r}")
        return cls(doc["points"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "Landmark":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise StructuralError(f"{path}: not valid JSON ({exc})") from exc
        try:
            return cls.from_json(doc)
        except StructuralError as exc:
            raise StructuralError(f"{path}: {exc}") from exc


class LandmarkImage:
    """Single-channel raster of a landmark set, values in [0, 1]."""

    __slots__ = ("pixels",)

    def __init__(self, pixels: np.ndarray):
        arr = np.asarray(pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise StructuralError(f"landmark image must be square 2-D, got {arr.shape}")
        self.pixels = arr

    @property
    def resolution(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, LandmarkImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class LandmarkEdit:
    """Displacement of a single landmark point by ``delta``."""

    point_index: int
    delta: tuple[float, float]

    def __post_init__(self):
        if not 0 <= self.point_index < LANDMARK_COUNT:
            raise StructuralError(
                f"point index {self.point_index} out of range [0, {LANDMARK_COUNT})"
            )


def normalize_landmarks(
    raw_points: np.ndarray | Iterable, crop: tuple[float, float, float, float]
) -> Landmark:
    """Map 106 pixel-coordinate points affinely so the crop covers [0, 1]^2.

    ``crop`` is (x, y, width, height) in pixels.
    """
    arr = np.asarray(raw_points, dtype=np.float64)
    if arr.shape != (LANDMARK_COUNT, 2):
        raise StructuralError(
            f"expected {LANDMARK_COUNT} raw points of shape ({LANDMARK_COUNT}, 2), got {arr.shape}"
        )
    x, y, w, h = (float(v) for v in crop)
    if w <= 0 or h <= 0:
        raise DomainError(f"degenerate crop: width={w}, height={h}")
    out = np.empty_like(arr)
    out[:, 0] = (arr[:, 0] - x) / w
    out[:, 1] = (arr[:, 1] - y) / h
    return Landmark(out)


def denormalize_landmarks(
    l: Landmark, crop: tuple[float, float, float, float]
) -> np.ndarray:
    """Inverse of :func:`normalize_landmarks`; returns raw pixel coordinates."""
    x, y, w, h = (float(v) for v in crop)
    if w <= 0 or h <= 0:
        raise DomainError(f"degenerate crop: width={w}, height={h}")
    out = np.empty_like(l.points)
    out[:, 0] = l.points[:, 0] * w + x
    out[:, 1] = l.points[:, 1] * h + y
    return out


# Out-of-range coordinates are clamped at rasterization rather than rejected,
# so an overshooting converter cannot abort training. The counter is a
# diagnostic, incremented once per rasterize call that clamped anything.
_clamp_warning_count = 0


def clamp_warning_count() -> int:
    return _clamp_warning_count


def _frac(v: float) -> float:
    return v - math.floor(v)


def _plot(img: np.ndarray, ix: int, iy: int, c: float) -> None:
    h, w = img.shape
    if 0 <= ix < w and 0 <= iy < h and c > img[iy, ix]:
        img[iy, ix] = c


def _splat_point(img: np.ndarray, x: float, y: float) -> None:
    # Bilinear splat for a degenerate (zero-length) polyline segment.
    x0, y0 = math.floor(x), math.floor(y)
    fx, fy = x - x0, y - y0
    _plot(img, x0, y0, (1 - fx) * (1 - fy))
    _plot(img, x0 + 1, y0, fx * (1 - fy))
    _plot(img, x0, y0 + 1, (1 - fx) * fy)
    _plot(img, x0 + 1, y0 + 1, fx * fy)


def _draw_segment(img: np.ndarray, x0: float, y0: float, x1: float, y1: float) -> None:
    """Xiaolin Wu anti-aliased 1-pixel line from (x0, y0) to (x1, y1)."""
    if x0 == x1 and y0 == y1:
        _splat_point(img, x0, y0)
        return
    steep = abs(y1 - y0) > abs(x1 - x0)
    if steep:
        x0, y0, x1, y1 = y0, x0, y1, x1
    if x0 > x1:
        x0, x1, y0, y1 = x1, x0, y1, y0
    dx = x1 - x0
    gradient = (y1 - y0) / dx if dx != 0.0 else 1.0

    def plot(px: float, py_int: int, c: float) -> None:
        if steep:
            _plot(img, py_int, int(px), c)
        else:
            _plot(img, int(px), py_int, c)

    # First endpoint.
    xend = round(x0)
    yend = y0 + gradient * (xend - x0)
    xgap = 1.0 - _frac(x0 + 0.5)
    xpx1 = xend
    ypx1 = math.floor(yend)
    plot(xpx1, ypx1, (1.0 - _frac(yend)) * xgap)
    plot(xpx1, ypx1 + 1, _frac(yend) * xgap)
    intery = yend + gradient

    # Second endpoint.
    xend = round(x1)
    yend = y1 + gradient * (xend - x1)
    xgap = _frac(x1 + 0.5)
    xpx2 = xend
    ypx2 = math.floor(yend)
    plot(xpx2, ypx2, (1.0 - _frac(yend)) * xgap)
    plot(xpx2, ypx2 + 1, _frac(yend) * xgap)

    for px in range(int(xpx1) + 1, int(xpx2)):
        fl = math.floor(intery)
        plot(px, fl, 1.0 - _frac(intery))
        plot(px, fl + 1, _frac(intery))
        intery += gradient


def rasterize(
    l: Landmark,
    resolution: int = DEFAULT_RASTER_SIZE,
    grouping: Sequence[FacePart] | None = None,
) -> LandmarkImage:
    """Draw the facial-part polylines of ``l`` onto a ``resolution``-square raster.

    Each part is drawn as a chain of 1-pixel anti-aliased segments at
    intensity 1.0 on a 0.0 background. Deterministic: identical inputs give
    bit-identical rasters. Coordinates outside [0, 1] are clamped (with a
    warning counter incremented), never rejected.
    """
    global _clamp_warning_count
    if resolution < 8:
        raise DomainError(f"raster resolution must be >= 8, got {resolution}")
    if grouping is None:
        grouping = DEFAULT_GROUPING

    pts = l.points
    if np.any(pts < 0.0) or np.any(pts > 1.0):
        pts = np.clip(pts, 0.0, 1.0)
        _clamp_warning_count += 1

    scale = resolution - 1
    img = np.zeros((resolution, resolution), dtype=np.float64)
    for part in grouping:
        idx = list(part.indices)
        if part.closed and len(idx) > 2:
            idx = idx + [idx[0]]
        for a, b in zip(idx[:-1], idx[1:]):
            x0, y0 = pts[a, 0] * scale, pts[a, 1] * scale
            x1, y1 = pts[b, 0] * scale, pts[b, 1] * scale
            _draw_segment(img, x0, y0, x1, y1)
    return LandmarkImage(img)


def ace(a: Landmark, b: Landmark) -> float:
    """Average coordinate-wise error: mean |a - b| over all 212 scalars."""
    return float(np.mean(np.abs(a.points - b.points)))


def interpolate(a: Landmark, b: Landmark, t: float) -> Landmark:
    """Point-wise affine blend (1 - t) * a + t * b for t in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"interpolation parameter must be in [0, 1], got {t}")
    if t == 0.0:
        return a.copy()
    if t == 1.0:
        return b.copy()
    return Landmark((1.0 - t) * a.points + t * b.points)


def manipulate(l: Landmark, edits: Sequence[LandmarkEdit]) -> Landmark:
    """Apply point displacements; repeated edits to one index add up."""
    out = l.points.copy()
    for edit in edits:
        out[edit.point_index, 0] += edit.delta[0]
        out[edit.point_index, 1] += edit.delta[1]
    return Landmark(out)
