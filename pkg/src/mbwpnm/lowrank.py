"""Weighted Schatten-p low-rank solver for whitened patch matrices.

A patch matrix has ``d = h*h*B`` rows laid out band-major (all ``h*h``
pixels of band 0, then band 1, ...) and one column per similar patch.
The whitening matrix scales each band's block of rows by ``1/sigma_b``; it
is only ever applied as a row scaling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .shrinkage import LAMBDA, ShrinkageSpec, gst

SIGMA_FLOOR = 1e-3


@dataclass(frozen=True)
class WhiteningMatrix:
    """Block-diagonal ``diag(1/sigma_1 I, ..., 1/sigma_B I)``."""

    inv_sigmas: np.ndarray

    def __post_init__(self):
        inv = np.asarray(self.inv_sigmas, dtype=np.float64).ravel()
        if inv.size == 0 or not np.all(np.isfinite(inv)) or np.any(inv <= 0):
            raise ValueError("whitening entries must be positive and finite")
        object.__setattr__(self, "inv_sigmas", inv)

    @classmethod
    def from_sigmas(cls, sigmas, floor=SIGMA_FLOOR):
        """Build from per-band noise deviations, flooring zeros at ``floor``."""
        s = np.asarray(sigmas, dtype=np.float64).ravel()
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ValueError("noise deviations must be finite and non-negative")
        return cls(1.0 / np.maximum(s, floor))

    @classmethod
    def identity(cls, bands=1):
        return cls(np.ones(bands))

    @property
    def bands(self):
        return self.inv_sigmas.size

    def _row_scale(self, d):
        if d % self.bands:
            raise ValueError(f"{d} rows cannot be split into {self.bands} bands")
        return np.repeat(self.inv_sigmas, d // self.bands)

    def apply(self, A):
        """``W @ A`` for ``A`` of shape (..., d, M)."""
        A = np.asarray(A, dtype=np.float64)
        return A * self._row_scale(A.shape[-2])[:, None]

    def apply_inverse(self, A):
        """``W^-1 @ A`` for ``A`` of shape (..., d, M)."""
        A = np.asarray(A, dtype=np.float64)
        return A / self._row_scale(A.shape[-2])[:, None]


class SvdResult(NamedTuple):
    U: np.ndarray
    singulars: np.ndarray
    V: np.ndarray


def svd_thin(A):
    """Thin SVD with a fixed sign convention.

    Stacked input of shape (..., d, M) is decomposed matrix by matrix. Each
    left singular vector is flipped so that its first nonzero entry is
    non-negative, which makes the result reproducible.

    Returns
    -------
    SvdResult
        ``U`` (..., d, r), ``singulars`` (..., r) non-increasing and
        ``V`` (..., M, r), with ``r = min(d, M)``.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim < 2:
        raise ValueError("svd_thin needs a matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    first = np.argmax(U != 0, axis=-2)[..., None, :]
    lead = np.take_along_axis(U, first, axis=-2)
    flip = np.where(lead < 0, -1.0, 1.0)
    U = U * flip
    V = np.swapaxes(Vt, -1, -2) * flip
    return SvdResult(U, s, V)


def _reconstruct(U, sig, V):
    return np.matmul(U * sig[..., None, :], np.swapaxes(V, -1, -2))


def solve(Y, W, spec):
    """Minimise ``||W(X - Y)||_F^2 + 2 * sum_i w_i * sigma_i(WX)**p``.

    Parameters
    ----------
    Y : ndarray, shape (d, M)
        Noisy patch matrix, band-major rows.
    W : WhiteningMatrix
    spec : ShrinkageSpec
        ``spec.omega`` must have length ``min(d, M)``.

    Returns
    -------
    ndarray, shape (d, M)
        ``W^-1 U diag(gst(delta_i, w_i)) V^T`` where ``U diag(delta) V^T``
        is the SVD of ``W Y``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ValueError("Y must be a 2-D patch matrix")
    r = min(Y.shape)
    if spec.omega.size != r:
        raise ValueError(f"expected {r} weights, got {spec.omega.size}")
    if r == 0 or not np.any(Y):
        return Y.copy()
    U, delta, V = svd_thin(W.apply(Y))
    sig = gst(delta, spec.omega, spec.p, spec.J)
    assert np.all(np.diff(sig) <= 0), "shrunk spectrum lost its ordering"
    return W.apply_inverse(_reconstruct(U, sig, V))


def solve_groups(Y, W, p, J, weights: Callable[[np.ndarray], np.ndarray]):
    """Batched :func:`solve` with weights computed from each group's spectrum.

    ``Y`` has shape (n, d, M); ``weights`` maps the (n, r) whitened singular
    values to (n, r) non-descending weights.
    """
    Y = np.asarray(Y, dtype=np.float64)
    U, delta, V = svd_thin(W.apply(Y))
    omega = np.asarray(weights(delta), dtype=np.float64)
    if omega.shape != delta.shape:
        raise ValueError("weight array does not match the spectra")
    sig = gst(delta, omega, p, J)
    return W.apply_inverse(_reconstruct(U, sig, V))


def objective(X, Y, W, spec, transformed=True, lam=LAMBDA):
    """Data fit plus weighted Schatten-p penalty.

    With ``transformed`` the penalty is taken on the singular values of
    ``W X`` (the form :func:`solve` minimises), otherwise on those of ``X``.
    ``lam`` multiplies the penalty; the default matches the GST scaling.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    r = min(X.shape)
    if spec.omega.size != r:
        raise ValueError(f"expected {r} weights, got {spec.omega.size}")
    fit = np.sum(W.apply(X - Y) ** 2)
    target = W.apply(X) if transformed else X
    s = np.linalg.svd(target, compute_uv=False)
    return float(fit + lam * np.sum(spec.omega * s ** spec.p))


__all__ = [
    "ShrinkageSpec",
    "SvdResult",
    "WhiteningMatrix",
    "objective",
    "solve",
    "solve_groups",
    "svd_thin",
]
