"""Linear hash model: a d x r projection matrix and its encoders.

Bit k of a code is the sign of w_k^T x with the convention sgn(0) = +1,
applied uniformly everywhere. Inputs are assumed already centered; mean
tracking belongs to the trainer pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import HashCode, PackedCodes


@dataclass(frozen=True)
class HashModel:
    """Immutable snapshot of a projection matrix.

    Attributes:
        projection: (dim, n_bits) float64 matrix; column k is the
            projection vector for bit k.
    """

    projection: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.projection, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError("projection must be a (dim, n_bits) matrix with positive shape")
        if not np.all(np.isfinite(w)):
            raise ValueError("projection entries must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "projection", w)

    @property
    def dim(self) -> int:
        return self.projection.shape[0]

    @property
    def n_bits(self) -> int:
        return self.projection.shape[1]


def init_lsh(dim: int, n_bits: int, seed: int) -> HashModel:
    """Random-projection initialization: i.i.d. standard normal entries.

    Deterministic in the seed. Zero columns have probability zero, which
    keeps per-bit potential-loss selection well defined downstream.
    """
    if dim < 1 or n_bits < 1:
        raise ValueError(f"dim and n_bits must be >= 1, got {dim}x{n_bits}")
    rng = np.random.default_rng(seed)
    return HashModel(rng.standard_normal((dim, n_bits)))


def _check_vector(model: HashModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise ValueError(f"expected vector of length {model.dim}, got shape {x.shape}")
    return x


def encode(model: HashModel, x) -> HashCode:
    """Hash one centered vector: bit k is +1 iff w_k^T x >= 0."""
    x = _check_vector(model, x)
    projections = model.projection.T @ x
    signs = np.where(projections >= 0, 1, -1).astype(np.int8)
    return HashCode.from_signs(signs)


def encode_many(model: HashModel, xs: np.ndarray) -> PackedCodes:
    """Hash a (n, dim) matrix of centered vectors into packed codes."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != model.dim:
        raise ValueError(f"expected (n, {model.dim}) matrix, got shape {xs.shape}")
    return PackedCodes.from_bit_matrix(xs @ model.projection >= 0)


def structured_score(model: HashModel, x, code: HashCode) -> float:
    """Score f^T W^T x of a candidate code f against the projections of x.

    encode(model, x) maximizes this over all 2^r codes; at the argmax the
    score equals the l1 norm of W^T x.
    """
    x = _check_vector(model, x)
    if code.n_bits != model.n_bits:
        raise ValueError(f"code has {code.n_bits} bits, model produces {model.n_bits}")
    return float(code.signs @ (model.projection.T @ x))
