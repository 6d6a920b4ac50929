"""PSNR and SSIM with the reference image's maximum as peak / dynamic range."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """``10 log10(max(b)^2 / MSE)``; identical images give ``inf``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    peak = float(b.max())
    return 10.0 * math.log10(peak * peak / mse) if peak > 0 else -math.inf


def _gaussian_window():
    r = SSIM_WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-x ** 2 / (2 * SSIM_SIGMA ** 2))
    g /= g.sum()
    return g


def ssim(a: np.ndarray, b: np.ndarray, data_range: float | None = None) -> float:
    """Mean structural similarity over an 11x11 Gaussian window (sigma 1.5).

    ``data_range`` defaults to ``max(b)``. Local statistics use reflected
    borders and the mean skips the half-window margin.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if data_range is None:
        data_range = float(b.max())
    if data_range <= 0:
        data_range = 1.0
    g = _gaussian_window()

    def blur(x):
        x = ndimage.correlate1d(x, g, axis=0, mode="reflect")
        return ndimage.correlate1d(x, g, axis=1, mode="reflect")

    mu_a, mu_b = blur(a), blur(b)
    saa = blur(a * a) - mu_a * mu_a
    sbb = blur(b * b) - mu_b * mu_b
    sab = blur(a * b) - mu_a * mu_b
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (saa + sbb + c2)
    smap = num / den
    r = SSIM_WINDOW // 2
    if smap.shape[0] > 2 * r and smap.shape[1] > 2 * r:
        smap = smap[r:-r, r:-r]
    return float(smap.mean())


def speckle_contrast(img: np.ndarray, region=None) -> float:
    """Standard deviation over mean inside ``region`` (a boolean mask or slices)."""
    vals = np.asarray(img, dtype=np.float64)
    if region is not None:
        vals = vals[region]
    mean = vals.mean()
    return float(vals.std() / mean) if mean > 0 else math.inf
