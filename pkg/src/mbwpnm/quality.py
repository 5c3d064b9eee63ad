"""Picture quality indices: PSNR, SSIM, ERGAS and SAM."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .imaging import as_stack

PEAK = 255.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03

CSV_HEADER = ("image", "psnr", "ssim", "ergas", "sam")


def _pair(x, y):
    x, y = as_stack(x), as_stack(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def psnr(x, y):
    """``10 log10(255^2 / MSE)`` over all samples; ``inf`` for identical inputs."""
    x, y = _pair(x, y)
    mse = np.mean((x - y) ** 2)
    return math.inf if mse == 0 else float(10 * np.log10(PEAK ** 2 / mse))


def _gaussian_window():
    t = np.arange(SSIM_WIN) - (SSIM_WIN - 1) / 2
    g = np.exp(-t * t / (2 * SSIM_SIGMA ** 2))
    return g / g.sum()


def _local_mean(a, g):
    m = correlate1d(correlate1d(a, g, axis=0, mode="reflect"), g, axis=1, mode="reflect")
    r = SSIM_WIN // 2
    return m[r:-r, r:-r]  # keep only windows fully inside the image


def ssim(x, y):
    """Mean single-scale SSIM (11x11 Gaussian window, sigma 1.5), averaged over bands."""
    x, y = _pair(x, y)
    if x.shape[0] < SSIM_WIN or x.shape[1] < SSIM_WIN:
        raise ValueError(f"SSIM needs at least {SSIM_WIN}x{SSIM_WIN} pixels")
    g = _gaussian_window()
    c1, c2 = (SSIM_K1 * PEAK) ** 2, (SSIM_K2 * PEAK) ** 2
    vals = []
    for b in range(x.shape[2]):
        xb, yb = x[:, :, b], y[:, :, b]
        mx, my = _local_mean(xb, g), _local_mean(yb, g)
        vx = _local_mean(xb * xb, g) - mx * mx
        vy = _local_mean(yb * yb, g) - my * my
        cxy = _local_mean(xb * yb, g) - mx * my
        s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        vals.append(s.mean())
    return float(np.mean(vals))


def ergas(x_ref, y):
    """ERGAS with resolution ratio 1: ``100 sqrt(mean_b (RMSE_b / mean_b)^2)``."""
    x, y = _pair(x_ref, y)
    means = x.mean(axis=(0, 1))
    if np.any(means == 0):
        raise ValueError("ERGAS is undefined for a reference band with zero mean")
    rmse = np.sqrt(np.mean((x - y) ** 2, axis=(0, 1)))
    return float(100 * np.sqrt(np.mean((rmse / means) ** 2)))


def sam(x_ref, y):
    """Mean spectral angle in degrees; pixels with a zero spectrum are skipped."""
    x, y = _pair(x_ref, y)
    x = x.reshape(-1, x.shape[2])
    y = y.reshape(-1, y.shape[2])
    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    keep = (nx > 0) & (ny > 0)
    if not np.any(keep):
        raise ValueError("SAM is undefined: every pixel has a zero spectrum")
    u = x[keep] / nx[keep, None]
    v = y[keep] / ny[keep, None]
    # 2 atan2(|u - v|, |u + v|) is exact near 0 and 180 degrees, unlike arccos
    ang = 2 * np.arctan2(np.linalg.norm(u - v, axis=1), np.linalg.norm(u + v, axis=1))
    return float(np.degrees(np.mean(ang)))


@dataclass(frozen=True)
class QualityReport:
    psnr: float
    ssim: float
    ergas: float
    sam: float

    def csv_row(self, image_id):
        def fmt(v):
            return "inf" if math.isinf(v) else f"{v:.6f}"

        return [str(image_id), fmt(self.psnr), fmt(self.ssim), fmt(self.ergas), fmt(self.sam)]


def evaluate(ref, test):
    """All four indices of ``test`` against the clean ``ref``."""
    return QualityReport(psnr(ref, test), ssim(ref, test), ergas(ref, test), sam(ref, test))
