"""Generalized soft-thresholding (GST) and singular-value weights.

The scalar problem solved here is

    min_{s >= 0}  (s - delta)**2 + 2 * omega * s**p

i.e. ``0.5 * (s - delta)**2 + omega * s**p`` up to a factor of two. This is
the normalisation under which the GST threshold and fixed-point update
below are exact, and under which ``p = 1`` reduces to ordinary soft
thresholding by ``omega``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Fidelity-to-penalty ratio implied by the GST update; see module docstring.
LAMBDA = 2.0

DEFAULT_J = 3
DEFAULT_C = 2.0 * np.sqrt(2.0)
DEFAULT_EPS = 1e-16


def _check_p(p):
    if not (0.0 < p <= 1.0):
        raise ValueError(f"power p must lie in (0, 1], got {p!r}")


def _check_omega(omega):
    if np.any(np.asarray(omega) < 0) or np.any(np.isnan(omega)):
        raise ValueError("weights must be non-negative")


@dataclass(frozen=True)
class ShrinkageSpec:
    """Power, weight vector and inner iteration count for GST shrinkage."""

    p: float
    omega: np.ndarray = field(repr=False)
    J: int = DEFAULT_J

    def __post_init__(self):
        _check_p(self.p)
        if int(self.J) != self.J or self.J < 1:
            raise ValueError(f"J must be a positive integer, got {self.J!r}")
        omega = np.asarray(self.omega, dtype=np.float64).ravel()
        _check_omega(omega)
        if np.any(np.diff(omega) < 0):
            raise ValueError("weights must be in non-descending order")
        object.__setattr__(self, "omega", omega)


def gst_threshold(omega, p):
    """Threshold below which the GST solution is exactly zero.

    Parameters
    ----------
    omega : float or array_like
        Non-negative weight(s).
    p : float
        Power in (0, 1].

    Returns
    -------
    tau : float or ndarray
        ``(2w(1-p))**(1/(2-p)) + w*p*(2w(1-p))**((p-1)/(2-p))``; equal to
        ``omega`` when ``p == 1``.
    """
    _check_p(p)
    w = np.asarray(omega, dtype=np.float64)
    _check_omega(w)
    if p == 1.0:
        tau = w.copy()
    else:
        tau = np.zeros_like(w)
        pos = w > 0
        base = 2.0 * w[pos] * (1.0 - p)
        tau[pos] = (base ** (1.0 / (2.0 - p))
                    + w[pos] * p * base ** ((p - 1.0) / (2.0 - p)))
    return float(tau) if tau.ndim == 0 else tau


def gst(delta, omega, p, J=DEFAULT_J):
    """Generalized soft-thresholding operator ``S_p(delta; omega)``.

    Works elementwise on arrays; ``delta`` and ``omega`` broadcast.

    Parameters
    ----------
    delta : float or array_like
        Value(s) to shrink.
    omega : float or array_like
        Non-negative weight(s).
    p : float
        Power in (0, 1]. ``p == 1`` uses the soft-thresholding closed form.
    J : int
        Number of fixed-point iterations for ``p < 1``.

    Returns
    -------
    float or ndarray
        Shrunk value(s), same sign as ``delta`` or zero.
    """
    _check_p(p)
    if int(J) != J or J < 1:
        raise ValueError(f"J must be a positive integer, got {J!r}")
    d = np.asarray(delta, dtype=np.float64)
    w = np.asarray(omega, dtype=np.float64)
    _check_omega(w)
    d, w = np.broadcast_arrays(d, w)

    if p == 1.0:
        out = np.sign(d) * np.maximum(np.abs(d) - w, 0.0)
    else:
        mag = np.abs(d)
        tau = np.asarray(gst_threshold(w, p))
        live = mag > tau
        a = mag[live]
        wp = w[live] * p
        s = a.copy()
        for _ in range(int(J)):
            s = a - wp * s ** (p - 1.0)
        out = np.zeros_like(mag)
        out[live] = np.sign(d[live]) * s
    return float(out) if out.ndim == 0 else out


def estimate_clean_singulars(delta, M, noise_var=1.0):
    """``sqrt(max(delta**2 - M*noise_var, 0))``, the usual WNNM estimate."""
    d = np.asarray(delta, dtype=np.float64)
    return np.sqrt(np.maximum(d * d - M * noise_var, 0.0))


def make_weights(delta, c=DEFAULT_C, M=1, p=1.0, eps=DEFAULT_EPS,
                 noise_var=1.0, corrected=True):
    """Per-singular-value weights ``c*sqrt(M) / (s**(1/p) + eps)``.

    ``s`` is the noise-corrected estimate of the clean singular values when
    ``corrected`` is true (see :func:`estimate_clean_singulars`), else the raw
    ``delta``. Because ``delta`` must be non-increasing the weights come out
    non-descending. Stacked inputs are handled along the last axis.
    """
    _check_p(p)
    d = np.asarray(delta, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("singular values must be non-negative")
    if d.ndim and np.any(np.diff(d, axis=-1) > 0):
        raise ValueError("singular values must be sorted non-increasing")
    if c < 0 or eps < 0:
        raise ValueError("c and eps must be non-negative")
    s = estimate_clean_singulars(d, M, noise_var) if corrected else d
    return c * np.sqrt(M) / (s ** (1.0 / p) + eps)
