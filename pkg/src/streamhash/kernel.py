"""Explicit RBF feature map over stored anchor points.

Maps a raw vector x to z(x) = [k(x, a_1), ..., k(x, a_m)] with the
Gaussian kernel k(x, y) = exp(-||x - y||^2 / (2 sigma^2)), turning the
linear hash model into a kernelized one. Anchors are the first m vectors
seen on the stream, stored verbatim in arrival order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SIGMA = 1.0


@dataclass(frozen=True)
class KernelMapper:
    anchors: np.ndarray  # (m, raw_dim)
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        anchors = np.ascontiguousarray(self.anchors, dtype=np.float64)
        if anchors.ndim != 2 or anchors.shape[0] < 1:
            raise ValueError("anchors must be a non-empty (m, dim) matrix")
        if not np.all(np.isfinite(anchors)):
            raise ValueError("anchors must be finite")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        anchors.setflags(write=False)
        object.__setattr__(self, "anchors", anchors)

    @property
    def n_anchors(self) -> int:
        return self.anchors.shape[0]

    @property
    def raw_dim(self) -> int:
        return self.anchors.shape[1]


def fit_anchors(samples, sigma: float = DEFAULT_SIGMA) -> KernelMapper:
    """Store the given samples verbatim, in order, as the anchor set."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("anchor sample set must be non-empty")
    if samples.ndim != 2:
        raise ValueError("samples must be a (m, dim) matrix")
    return KernelMapper(anchors=samples, sigma=sigma)


def map_one(mapper: KernelMapper, x) -> np.ndarray:
    """Kernel-map one raw vector; every entry lies in (0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (mapper.raw_dim,):
        raise ValueError(f"expected vector of length {mapper.raw_dim}, got shape {x.shape}")
    sq_dist = np.sum((mapper.anchors - x) ** 2, axis=1)
    return np.exp(-sq_dist / (2.0 * mapper.sigma**2))


def map_many(mapper: KernelMapper, xs: np.ndarray) -> np.ndarray:
    """Kernel-map a (n, raw_dim) matrix row by row.

    Uses the same arithmetic as map_one per row (chunked only to bound
    memory), so single-vector and batch paths agree bitwise.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != mapper.raw_dim:
        raise ValueError(f"expected (n, {mapper.raw_dim}) matrix, got shape {xs.shape}")
    n = xs.shape[0]
    out = np.empty((n, mapper.n_anchors), dtype=np.float64)
    chunk = max(1, 2_000_000 // max(1, mapper.n_anchors * mapper.raw_dim))
    for start in range(0, n, chunk):
        block = xs[start : start + chunk]
        sq_dist = np.sum((block[:, None, :] - mapper.anchors[None, :, :]) ** 2, axis=2)
        out[start : start + chunk] = np.exp(-sq_dist / (2.0 * mapper.sigma**2))
    return out
