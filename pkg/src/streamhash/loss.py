"""Loss functions over code pairs.

Two losses drive training. The similarity loss charges a similar pair for
Hamming distance above the integer threshold alpha, and a dissimilar pair
for distance below the real threshold beta * r. The prediction loss is the
structured-margin gap between the model's own code pair and a zero-loss
target pair, plus sqrt of the similarity loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .codes import HashCode, hamming_distance
from .model import HashModel, structured_score

# Snap similarity losses below this to exactly zero. Only reachable when
# beta * r is a mathematical integer and float dust would otherwise turn
# a zero loss into ~1e-16, tripping the update gate.
_LOSS_EPS = 1e-9


@dataclass(frozen=True)
class LossParams:
    """Thresholds of the similarity loss for codes of length n_bits."""

    alpha: int
    beta: float
    n_bits: int

    def __post_init__(self):
        if self.n_bits < 1:
            raise ValueError("n_bits must be >= 1")
        if not (0 <= self.alpha < self.n_bits):
            raise ValueError(f"alpha must be in [0, {self.n_bits}), got {self.alpha}")
        if not (0 < self.beta <= 1):
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if not self.beta * self.n_bits > self.alpha:
            raise ValueError(
                f"beta * n_bits must exceed alpha to leave a margin "
                f"({self.beta} * {self.n_bits} <= {self.alpha})"
            )

    @property
    def dissimilar_target(self) -> int:
        """ceil(beta * r): the distance a corrected dissimilar pair lands on."""
        return math.ceil(self.beta * self.n_bits - _LOSS_EPS)


class CodePair(NamedTuple):
    i_code: HashCode
    j_code: HashCode


@dataclass(frozen=True)
class PairSample:
    """Two feature vectors with a similarity label in {-1, +1}."""

    x_i: np.ndarray
    x_j: np.ndarray
    s: int

    def __post_init__(self):
        x_i = np.asarray(self.x_i, dtype=np.float64)
        x_j = np.asarray(self.x_j, dtype=np.float64)
        if x_i.ndim != 1 or x_j.ndim != 1 or x_i.shape != x_j.shape:
            raise ValueError("pair vectors must be 1-d and equally long")
        if not (np.all(np.isfinite(x_i)) and np.all(np.isfinite(x_j))):
            raise ValueError("pair vectors must be finite")
        if self.s not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.s}")
        object.__setattr__(self, "x_i", x_i)
        object.__setattr__(self, "x_j", x_j)


def similarity_loss(pair_codes: CodePair, s: int, params: LossParams) -> float:
    """Loss of a code pair against its label.

    Similar pairs pay max(0, D_h - alpha); dissimilar pairs pay
    max(0, beta * r - D_h). beta * r is compared as an exact real here;
    the ceiling enters only when inferring corrected codes.
    """
    if s not in (-1, 1):
        raise ValueError(f"label must be -1 or +1, got {s}")
    d_h = hamming_distance(pair_codes.i_code, pair_codes.j_code)
    if s == 1:
        value = float(max(0, d_h - params.alpha))
    else:
        value = max(0.0, params.beta * params.n_bits - d_h)
    return 0.0 if value < _LOSS_EPS else value


def pair_score(model: HashModel, pair: PairSample, codes: CodePair) -> float:
    """Joint structured score of a code pair: f_i^T W^T x_i + f_j^T W^T x_j."""
    return structured_score(model, pair.x_i, codes.i_code) + structured_score(
        model, pair.x_j, codes.j_code
    )


def prediction_loss(
    model: HashModel, pair: PairSample, h: CodePair, g: CodePair, r_loss: float
) -> float:
    """Structured margin loss against a zero-loss code pair.

    Computes score(h) - score(g) + sqrt(r_loss). With h the model's own
    encoding of the pair the result is always >= sqrt(r_loss), since no
    code pair outscores the argmax encoding.
    """
    if r_loss < 0:
        raise ValueError(f"similarity loss must be non-negative, got {r_loss}")
    return pair_score(model, pair, h) - pair_score(model, pair, g) + math.sqrt(r_loss)
