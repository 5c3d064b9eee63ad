"""Brute-force references for the test and acceptance suites.

Nothing in the denoising path imports this module.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .lowrank import objective
from .shrinkage import LAMBDA


def scalar_objective(sigma, delta, omega, p, lam=LAMBDA):
    """``(sigma - delta)**2 + lam * omega * sigma**p``."""
    sigma = np.asarray(sigma, dtype=np.float64)
    return (sigma - delta) ** 2 + lam * omega * sigma ** p


@lru_cache(maxsize=64)
def _grid(n, step, p):
    g = np.arange(n + 1, dtype=np.float64) * step
    g.setflags(write=False)
    gp = g ** p
    gp.setflags(write=False)
    return g, gp


def scalar_min(delta, omega, p, grid_step=1e-6, lam=LAMBDA):
    """Exhaustive minimisation of :func:`scalar_objective` on a grid.

    Candidates are ``0, step, 2*step, ...`` up to ``|delta|``, plus
    ``|delta|`` itself. Returns ``(argmin, min_value)``.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    a = abs(float(delta))
    n = int(np.floor(a / grid_step + 1e-9))
    # cached per (size bucket, p) so many calls with one p stay cheap
    bucket = 1 << max(n, 1).bit_length()
    g, gp = _grid(bucket, float(grid_step), float(p))
    g, gp = g[: n + 1], gp[: n + 1]
    f = (g - a) ** 2 + lam * omega * gp
    k = int(np.argmin(f))
    best_s, best_f = g[k], f[k]
    f_end = scalar_objective(a, a, omega, p, lam)
    if f_end < best_f:
        best_s, best_f = a, f_end
    return float(np.copysign(best_s, delta)), float(best_f)


def _unit_directions(rng, shape, trials):
    D = rng.standard_normal((trials,) + tuple(shape))
    D /= np.sqrt(np.sum(D ** 2, axis=(1, 2)))[:, None, None]
    return D


def perturbation_check(X_hat, Y, W, spec, trials=1000, eta=1e-3, seed=0,
                       forms=(False, True), tol=1e-10):
    """True iff no random perturbation of size ``eta`` lowers the objective.

    Directions are unit-Frobenius Gaussian matrices from a seeded generator.
    Each entry of ``forms`` selects ``objective(..., transformed=form)``.
    """
    if trials < 1 or eta <= 0:
        raise ValueError("need trials >= 1 and eta > 0")
    rng = np.random.default_rng(seed)
    D = _unit_directions(rng, np.shape(X_hat), trials)
    for form in forms:
        base = objective(X_hat, Y, W, spec, transformed=form)
        for Dt in D:
            if objective(X_hat + eta * Dt, Y, W, spec, transformed=form) < base - tol:
                return False
    return True


def singular_product_bound_holds(A, B, rtol=1e-9):
    """``sigma_i(AB) <= sigma_i(A) * sigma_1(B)`` for every ``i``."""
    sab = np.linalg.svd(A @ B, compute_uv=False)
    sa = np.linalg.svd(A, compute_uv=False)
    s1b = np.linalg.norm(B, 2)
    q = min(sab.size, sa.size)
    rhs = sa[:q] * s1b
    return bool(np.all(sab[:q] <= rhs + rtol * max(rhs[0], 1.0)))


def trace_bound_holds(A, B, rtol=1e-9):
    """``tr(A^T B) <= sum_i sigma_i(A) sigma_i(B)`` (von Neumann)."""
    lhs = np.trace(A.T @ B)
    rhs = np.sum(np.linalg.svd(A, compute_uv=False)
                 * np.linalg.svd(B, compute_uv=False))
    return bool(lhs <= rhs + rtol * max(abs(rhs), 1.0))


def weighted_svt(Y, inv_sigmas, c, eps=1e-16):
    """Whitened weighted singular-value soft thresholding, written out plainly.

    Reference for the ``p = 1`` path. With ``U S V^T = svd(W Y)`` each
    singular value is reduced by ``c*sqrt(M) / (sqrt(max(S**2 - M, 0)) + eps)``
    and the result is mapped back through ``W^-1``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    d, M = Y.shape
    B = len(inv_sigmas)
    w = np.repeat(np.asarray(inv_sigmas, dtype=np.float64), d // B)
    U, S, Vt = np.linalg.svd(w[:, None] * Y, full_matrices=False)
    clean = np.sqrt(np.maximum(S ** 2 - M, 0.0))
    S = np.maximum(S - c * np.sqrt(M) / (clean + eps), 0.0)
    return (U @ np.diag(S) @ Vt) / w[:, None]
