"""Patch vectors, block matching and overlap-averaging aggregation.

A patch at top-left ``(row, col)`` with side ``h`` becomes a vector of
length ``h*h*B``: band 0's pixels in row-major order, then band 1's, etc.
Patch positions are also addressed by their flat raster index
``row * (W - h + 1) + col``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class PatchGroup:
    """A reference patch and its most similar neighbours.

    ``members[0]`` is the reference; the rest follow by ascending distance,
    ties broken in raster order. ``matrix`` has one column per member.
    """

    reference: tuple[int, int]
    members: list[tuple[int, int]]
    distances: np.ndarray
    matrix: np.ndarray


def _check_index(shape, idx, h):
    H, W = shape[:2]
    r, c = idx
    if not (0 <= r <= H - h and 0 <= c <= W - h):
        raise IndexError(f"patch at {idx} with side {h} leaves a {H}x{W} image")


def extract_patch(img, idx, h):
    """Band-major vector of the ``h x h`` patch with top-left ``idx``."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    _check_index(img.shape, idx, h)
    r, c = idx
    return img[r:r + h, c:c + h, :].transpose(2, 0, 1).reshape(-1)


def patch_vectors(img, h):
    """All patch vectors, shape (H-h+1, W-h+1, h*h*B)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    win = sliding_window_view(img, (h, h), axis=(0, 1))  # (nH, nW, B, h, h)
    nh, nw = win.shape[:2]
    return win.reshape(nh, nw, -1)


def reference_grid(n, stride):
    """Reference offsets ``0, s, 2s, ...`` with the last one at ``n - 1``."""
    pos = list(range(0, n, stride))
    if pos[-1] != n - 1:
        pos.append(n - 1)
    return pos


def reference_positions(shape, h, stride):
    """Raster-ordered (row, col) reference patch positions."""
    H, W = shape[:2]
    if not 1 <= stride <= h:
        raise ValueError("stride must satisfy 1 <= stride <= h")
    rows = reference_grid(H - h + 1, stride)
    cols = reference_grid(W - h + 1, stride)
    return [(r, c) for r in rows for c in cols]


def match_in(vectors, ref, M, half):
    """Block matching over precomputed patch vectors.

    Returns the flat indices (length ``min(M, candidates)``) and squared
    distances of the chosen patches, reference first.
    """
    nh, nw, _ = vectors.shape
    r, c = ref
    r0, r1 = max(r - half, 0), min(r + half, nh - 1)
    c0, c1 = max(c - half, 0), min(c + half, nw - 1)
    diff = vectors[r0:r1 + 1, c0:c1 + 1] - vectors[r, c]
    dist = np.einsum("ijk,ijk->ij", diff, diff).ravel()
    order_key = dist.copy()
    ww = c1 - c0 + 1
    order_key[(r - r0) * ww + (c - c0)] = -np.inf
    take = np.argsort(order_key, kind="stable")[:M]
    rows = r0 + take // ww
    cols = c0 + take % ww
    return rows * nw + cols, dist[take]


def block_match(img, ref, h, M, half):
    """Group ``ref`` with its ``M - 1`` nearest patches inside the window.

    Candidates are all in-bounds patches whose top-left lies within ``half``
    pixels of ``ref`` in each direction. Distance is the squared Euclidean
    distance between patch vectors.
    """
    if M < 1:
        raise ValueError("group size M must be at least 1")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    _check_index(img.shape, ref, h)
    vec = patch_vectors(img, h)
    flat, dist = match_in(vec, tuple(ref), M, half)
    nw = vec.shape[1]
    members = [(int(i // nw), int(i % nw)) for i in flat]
    matrix = vec.reshape(-1, vec.shape[2])[flat].T.copy()
    return PatchGroup(tuple(ref), members, dist, matrix)


class Aggregator:
    """Accumulates patch-matrix estimates back into an (H, W, B) image.

    Contributions are summed strictly in the order they are added (group by
    group, member by member), so the result does not depend on how the
    groups were computed.
    """

    def __init__(self, shape, h):
        self.shape = H, W, B = tuple(shape)
        self.h = h
        self.npatch_w = W - h + 1
        dy, dx = np.mgrid[0:h, 0:h]
        pix = (dy * W + dx).ravel() * B
        self._offsets = (pix[None, :] + np.arange(B)[:, None]).ravel()
        self._sum = np.zeros(H * W * B)
        self._count = np.zeros(H * W * B)

    def add(self, flat_members, matrices):
        """Add groups: ``flat_members`` (n, M) indices, ``matrices`` (n, d, M)."""
        flat_members = np.asarray(flat_members)
        r, c = np.divmod(flat_members, self.npatch_w)
        base = (r * self.shape[1] + c) * self.shape[2]
        idx = (base[..., None] + self._offsets).ravel()
        vals = np.swapaxes(np.asarray(matrices, dtype=np.float64), -1, -2).ravel()
        n = self._sum.size
        # prepend the running sums so bincount continues the same sequential sum
        lead = np.arange(n)
        self._sum = np.bincount(np.concatenate([lead, idx]),
                                weights=np.concatenate([self._sum, vals]),
                                minlength=n)
        self._count += np.bincount(idx, minlength=n)

    def result(self):
        if np.any(self._count == 0):
            raise RuntimeError("some pixels received no patch estimate")
        return (self._sum / self._count).reshape(self.shape)


def aggregate(groups, shape):
    """Average denoised patch matrices back into an image.

    Parameters
    ----------
    groups : iterable of (PatchGroup, ndarray)
        Each group with its denoised (d, M) matrix.
    shape : tuple
        Output (H, W, B).
    """
    shape = tuple(shape)
    if len(shape) == 2:
        shape = shape + (1,)
    groups = list(groups)
    if not groups:
        raise RuntimeError("no groups to aggregate")
    d = groups[0][1].shape[0]
    h = int(round(np.sqrt(d / shape[2])))
    if h * h * shape[2] != d:
        raise ValueError(f"patch length {d} does not fit {shape[2]} bands")
    agg = Aggregator(shape, h)
    for group, X in groups:
        flat = [r * agg.npatch_w + c for r, c in group.members]
        agg.add(np.asarray(flat)[None, :], np.asarray(X)[None])
    return agg.result()
