"""Nonlocal low-rank denoising of color and multispectral images."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.signal import convolve2d

from . import lowrank, shrinkage
from .imaging import as_stack
from .patching import Aggregator, match_in, patch_vectors, reference_positions

log = logging.getLogger(__name__)

# Groups handed to one worker at a time. Fixed so results never depend on
# the worker count.
CHUNK = 64


@dataclass(frozen=True)
class NoiseProfile:
    """Per-band noise standard deviations in 0-255 intensity units."""

    sigmas: tuple

    def __post_init__(self):
        s = tuple(float(x) for x in np.ravel(self.sigmas))
        if not s or any(not np.isfinite(x) or x < 0 for x in s):
            raise ValueError("noise levels must be finite and non-negative")
        object.__setattr__(self, "sigmas", s)

    @property
    def bands(self):
        return len(self.sigmas)

    @property
    def rms(self):
        return rms_sigma(self.sigmas)


def _sigmas(noise):
    return np.asarray(noise.sigmas if isinstance(noise, NoiseProfile) else noise,
                      dtype=np.float64).ravel()


def rms_sigma(noise):
    """Root mean square of the per-band noise levels."""
    s = _sigmas(noise)
    return float(np.sqrt(np.sum(s * s) / s.size))


def auto_p(rms):
    """Power heuristic by noise level: lower noise favours ``p`` near 1."""
    if rms < 20:
        return 1.0
    if rms < 30:
        return 0.95
    if rms < 40:
        return 0.8
    return 0.55


@dataclass(frozen=True)
class DenoiseConfig:
    h: int = 6
    M: int = 70
    window: int = 40
    stride: int = 3
    K: int = 8
    alpha: float = 0.1
    p: Optional[float] = None  # None: pick from the noise level with auto_p
    c: float = shrinkage.DEFAULT_C
    eps: float = shrinkage.DEFAULT_EPS
    J: int = shrinkage.DEFAULT_J
    corrected_weights: bool = True
    reestimate_noise: bool = False
    reestimate_gamma: float = 0.54

    def __post_init__(self):
        if self.h < 1 or self.M < 1 or self.K < 1 or self.J < 1:
            raise ValueError("h, M, K and J must all be at least 1")
        if not 1 <= self.stride <= self.h:
            raise ValueError("stride must satisfy 1 <= stride <= h")
        if self.window < 0:
            raise ValueError("window must be non-negative")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.p is not None and not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if self.c < 0 or self.eps < 0:
            raise ValueError("c and eps must be non-negative")

    def resolved(self, noise):
        """Copy with ``p`` filled in from the noise level if it was unset."""
        return self if self.p is not None else replace(self, p=auto_p(rms_sigma(noise)))


def worker_count():
    """Pool size from ``MBWPNM_THREADS``; 0 or unset means all cores."""
    raw = os.environ.get("MBWPNM_THREADS", "").strip()
    n = int(raw) if raw else 0
    if n < 0:
        raise ValueError("MBWPNM_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


GroupSolver = Callable[[np.ndarray, "lowrank.WhiteningMatrix", DenoiseConfig], np.ndarray]


def mbwpnm_groups(Y, W, cfg):
    """Default group solver: GST shrinkage with per-group weights."""
    M = Y.shape[-1]

    def weights(delta):
        return shrinkage.make_weights(delta, cfg.c, M, cfg.p, cfg.eps,
                                      noise_var=1.0, corrected=cfg.corrected_weights)

    return lowrank.solve_groups(Y, W, cfg.p, cfg.J, weights)


def estimate_noise(img):
    """Per-band noise level from a Laplacian-difference residual.

    A fast approximation (Immerkaer's estimator): the 3x3 kernel cancels
    constant and linear intensity, and for Gaussian noise
    ``sigma = sqrt(pi/2) * mean|residual| / 6``.
    """
    a = as_stack(img)
    if a.shape[0] < 3 or a.shape[1] < 3:
        raise ValueError("noise estimation needs an image of at least 3x3")
    kernel = np.array([[1, -2, 1], [-2, 4, -2], [1, -2, 1]], dtype=np.float64)
    sig = [np.sqrt(np.pi / 2) * np.mean(np.abs(convolve2d(a[:, :, b], kernel, mode="valid"))) / 6
           for b in range(a.shape[2])]
    return NoiseProfile(tuple(sig))


def denoise(Y, noise, cfg=None, *, workers=None, group_solver=None, callback=None):
    """Denoise an (H, W, B) image with iterative nonlocal low-rank shrinkage.

    Parameters
    ----------
    Y : array_like
        Noisy image, intensities on the 0-255 scale.
    noise : NoiseProfile or sequence of float
        Per-band noise standard deviations.
    cfg : DenoiseConfig, optional
    workers : int, optional
        Thread count; defaults to :func:`worker_count`.
    group_solver : callable, optional
        ``(groups (n, d, M), W, cfg) -> estimates`` replacing the default
        :func:`mbwpnm_groups`; groups and aggregation stay the same.
    callback : callable, optional
        Called as ``callback(k, X_k, seconds)`` after each outer iteration,
        with the unclamped iterate.

    Returns
    -------
    ndarray
        Denoised image clamped to [0, 255].
    """
    Y = as_stack(Y)
    sig = _sigmas(noise)
    if sig.size != Y.shape[2]:
        raise ValueError(f"{sig.size} noise levels for {Y.shape[2]} bands")
    if not np.any(sig > 0):
        raise ValueError("nothing to denoise: every noise level is zero")
    cfg = (cfg or DenoiseConfig()).resolved(sig)
    H, Wd, B = Y.shape
    if H < cfg.h or Wd < cfg.h:
        raise ValueError(f"image {H}x{Wd} is smaller than one {cfg.h}x{cfg.h} patch")
    solver = group_solver or mbwpnm_groups
    workers = workers or worker_count()

    refs = reference_positions(Y.shape, cfg.h, cfg.stride)
    chunks = [refs[i:i + CHUNK] for i in range(0, len(refs), CHUNK)]
    half = cfg.window // 2
    X = Y.copy()
    cur_sig = sig.copy()

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for k in range(1, cfg.K + 1):
            t0 = time.perf_counter()
            Yk = X + cfg.alpha * (Y - X)
            if cfg.reestimate_noise and k > 1:
                resid = np.mean((Y - Yk) ** 2, axis=(0, 1))
                cur_sig = cfg.reestimate_gamma * np.sqrt(np.abs(sig ** 2 - resid))
            W = lowrank.WhiteningMatrix.from_sigmas(cur_sig)
            vec = patch_vectors(Yk, cfg.h)
            flat_vec = vec.reshape(-1, vec.shape[2])

            def run(chunk):
                members = [match_in(vec, ref, cfg.M, half)[0] for ref in chunk]
                if len({len(x) for x in members}) == 1:
                    batches = [np.stack(members)]
                else:
                    # small images: windows clipped to fewer than M candidates
                    batches = [x[None] for x in members]
                return [(b, solver(np.swapaxes(flat_vec[b], 1, 2), W, cfg))
                        for b in batches]

            agg = Aggregator(Y.shape, cfg.h)
            for solved in pool.map(run, chunks):
                for members, est in solved:
                    agg.add(members, est)
            X = agg.result()
            dt = time.perf_counter() - t0
            log.debug("iteration %d: %.2fs", k, dt)
            if callback is not None:
                callback(k, X, dt)
    return np.clip(X, 0.0, 255.0)
