"""Quantitative evaluation: SSIM, FID, parameter counts, inference speed."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
import torch

from reenact.errors import ConfigurationError, DataError
from reenact.images import FaceImage

# Stabilizers from the original SSIM formulation.
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5

# ITU-R BT.601 luma weights.
_LUMA = np.array([0.299, 0.587, 0.114])


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _filter2_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """2-D 'valid'-mode correlation with a small window, float64."""
    k = window.shape[0]
    h, w = img.shape
    out = np.zeros((h - k + 1, w - k + 1))
    for i in range(k):
        for j in range(k):
            out += window[i, j] * img[i : i + h - k + 1, j : j + w - k + 1]
    return out


def _ssim_single(a: np.ndarray, b: np.ndarray, data_range: float) -> float:
    window = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = (_SSIM_K1 * data_range) ** 2
    c2 = (_SSIM_K2 * data_range) ** 2
    mu_a = _filter2_valid(a, window)
    mu_b = _filter2_valid(b, window)
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    sigma_aa = _filter2_valid(a * a, window) - mu_aa
    sigma_bb = _filter2_valid(b * b, window) - mu_bb
    sigma_ab = _filter2_valid(a * b, window) - mu_ab
    num = (2.0 * mu_ab + c1) * (2.0 * sigma_ab + c2)
    den = (mu_aa + mu_bb + c1) * (sigma_aa + sigma_bb + c2)
    return float(np.mean(num / den))


def ssim(a: FaceImage, b: FaceImage, per_channel: bool = False) -> float:
    """Windowed SSIM (11x11 Gaussian, sigma 1.5) on luminance by default.

    ``per_channel=True`` averages the per-channel SSIM instead of
    converting to luma first. Images are in [-1, 1], so the dynamic range
    is 2.
    """
    pa = a.pixels.astype(np.float64)
    pb = b.pixels.astype(np.float64)
    if per_channel:
        return float(np.mean([_ssim_single(pa[c], pb[c], 2.0) for c in range(3)]))
    luma_a = np.tensordot(_LUMA, pa, axes=1)
    luma_b = np.tensordot(_LUMA, pb, axes=1)
    return _ssim_single(luma_a, luma_b, 2.0)


def fid(features_real: np.ndarray, features_fake: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)), the matrix square
    root taken by eigendecomposition of the symmetrized product with
    negative eigenvalues clipped at zero.
    """
    fr = np.asarray(features_real, dtype=np.float64)
    ff = np.asarray(features_fake, dtype=np.float64)
    if fr.ndim != 2 or ff.ndim != 2 or fr.shape[1] != ff.shape[1]:
        raise DataError(f"feature sets must be 2-D with equal dim, got {fr.shape} and {ff.shape}")
    dim = fr.shape[1]
    for name, f in (("real", fr), ("fake", ff)):
        if f.shape[0] <= dim:
            warnings.warn(
                f"{name} feature set has {f.shape[0]} samples for dimension {dim}; "
                "covariance estimate may be unstable",
                stacklevel=2,
            )
    mu1, mu2 = fr.mean(axis=0), ff.mean(axis=0)
    s1 = np.cov(fr, rowvar=False)
    s2 = np.cov(ff, rowvar=False)
    if not (np.all(np.isfinite(s1)) and np.all(np.isfinite(s2))):
        raise DataError("non-finite covariance; check the feature sets")
    s1 = np.atleast_2d(s1)
    s2 = np.atleast_2d(s2)

    # sqrt(S1) via eigendecomposition, then eigenvalues of sqrt(S1) S2 sqrt(S1).
    w1, v1 = np.linalg.eigh(s1)
    s1_half = (v1 * np.sqrt(np.clip(w1, 0.0, None))) @ v1.T
    w = np.linalg.eigvalsh(s1_half @ s2 @ s1_half)
    trace_sqrt = np.sum(np.sqrt(np.clip(w, 0.0, None)))
    value = float(np.sum((mu1 - mu2) ** 2) + np.trace(s1) + np.trace(s2) - 2.0 * trace_sqrt)
    return max(value, 0.0)


def count_params(params: torch.nn.Module | Iterable[torch.Tensor]) -> int:
    """Total trainable scalar count; additive over parameter partitions."""
    if isinstance(params, torch.nn.Module):
        params = params.parameters()
    return sum(int(p.numel()) for p in params if getattr(p, "requires_grad", True))


@dataclass(frozen=True)
class SpeedReport:
    fps: float
    latency_ms: float
    dispersion_ms: float
    iterations: int
    device: str


def measure_speed(
    fn: Callable[[], object],
    device_descriptor: str,
    iterations: int,
    warmup: int = 3,
) -> SpeedReport:
    """Median-of-runs frames-per-second for a single-sample callable."""
    if iterations <= 0:
        raise ConfigurationError("iterations must be positive")
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(iterations):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    med = float(np.median(times))
    spread = float(np.percentile(times, 90) - np.percentile(times, 10))
    return SpeedReport(
        fps=1.0 / med if med > 0 else float("inf"),
        latency_ms=med * 1e3,
        dispersion_ms=spread * 1e3,
        iterations=iterations,
        device=device_descriptor,
    )
