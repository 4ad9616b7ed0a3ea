"""Zero-loss code pair inference.

When a code pair violates its label, a corrected pair is built from it by
flipping the smallest possible number of bits: p0 = D_h - alpha bits drawn
from the disagreeing positions for a similar pair, p0 = ceil(beta*r) - D_h
bits drawn from the agreeing positions for a dissimilar pair. Each chosen
bit flips on exactly one side, the side whose sign * projection product is
smaller, and the bits chosen are those with the smallest potential loss
delta_k = min(h_i[k] * w_k^T x_i, h_j[k] * w_k^T x_j).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codes import HashCode
from .loss import CodePair, LossParams, PairSample, similarity_loss
from .model import HashModel

SIDE_I = "i"
SIDE_J = "j"


@dataclass(frozen=True)
class FlipPlan:
    """The set of (bit index, side) flips turning h into the corrected pair.

    At most one side is ever flipped at a given bit index. Bits whose
    projection column was exactly zero at selection time are listed in
    zero_columns; they carry no gradient and normally never occur with
    random-projection initialization.
    """

    flips: tuple[tuple[int, str], ...]
    zero_columns: tuple[int, ...] = field(default=())

    @property
    def p0(self) -> int:
        return len(self.flips)

    def sides(self) -> tuple[int, int]:
        """Counts of flips on side i and side j."""
        on_i = sum(1 for _, side in self.flips if side == SIDE_I)
        return on_i, len(self.flips) - on_i


EMPTY_PLAN = FlipPlan(flips=())


def delta_scores(
    model: HashModel, pair: PairSample, h: CodePair, candidate_set
) -> list[tuple[int, float, str]]:
    """Potential loss and cheaper side for each candidate bit.

    Returns (k, delta_k, side) triples in ascending bit order. Ties between
    the two sides go to side i, reading the flip rule's "<=" literally.
    """
    ks = np.asarray(sorted(candidate_set), dtype=np.intp)
    if ks.size and (ks[0] < 0 or ks[-1] >= model.n_bits):
        raise ValueError("candidate bit index out of range")
    proj_i = model.projection.T @ pair.x_i
    proj_j = model.projection.T @ pair.x_j
    a = h.i_code.signs[ks] * proj_i[ks]
    b = h.j_code.signs[ks] * proj_j[ks]
    out = []
    for k, ak, bk in zip(ks.tolist(), a.tolist(), b.tolist()):
        side = SIDE_I if ak <= bk else SIDE_J
        out.append((k, min(ak, bk), side))
    return out


def _select_flips(
    projection: np.ndarray,
    proj_i: np.ndarray,
    proj_j: np.ndarray,
    signs_i: np.ndarray,
    signs_j: np.ndarray,
    s: int,
    params: LossParams,
) -> tuple[np.ndarray, np.ndarray, FlipPlan]:
    """Core selection on precomputed projections; returns corrected signs.

    The trainer calls this directly so the per-step projections are
    computed once; callers must have checked that the loss is positive.
    """
    disagree = signs_i != signs_j
    d_h = int(disagree.sum())

    if s == 1:
        candidates = np.flatnonzero(disagree)
        p0 = d_h - params.alpha
    else:
        candidates = np.flatnonzero(~disagree)
        p0 = params.dissimilar_target - d_h
    if p0 > candidates.size:
        raise RuntimeError(f"need {p0} flips but only {candidates.size} candidate bits")

    a = signs_i[candidates] * proj_i[candidates]
    b = signs_j[candidates] * proj_j[candidates]
    deltas = np.minimum(a, b)

    # stable ascending (delta, bit index) order; the p0 cheapest bits win
    order = np.lexsort((candidates, deltas))
    chosen = candidates[order[:p0]]
    flip_on_i = a[order[:p0]] <= b[order[:p0]]

    new_i = signs_i.copy()
    new_j = signs_j.copy()
    flips = []
    for k, on_i in zip(chosen.tolist(), flip_on_i.tolist()):
        if on_i:
            new_i[k] = -new_i[k]
            flips.append((k, SIDE_I))
        else:
            new_j[k] = -new_j[k]
            flips.append((k, SIDE_J))

    zero_cols = tuple(int(k) for k in chosen.tolist() if not np.any(projection[:, k]))
    return new_i, new_j, FlipPlan(flips=tuple(flips), zero_columns=zero_cols)


def infer_zero_loss_codes(
    model: HashModel, pair: PairSample, h: CodePair, s: int, params: LossParams
) -> tuple[CodePair, FlipPlan]:
    """Build the corrected code pair for a violating step.

    Requires similarity_loss(h, s) > 0. The returned pair differs from h in
    exactly p0 positions, each flipped on one side, chosen as the p0 bits
    with smallest potential loss (ties broken by ascending bit index), and
    satisfies similarity_loss == 0 by construction: the corrected Hamming
    distance is alpha for a similar pair and ceil(beta*r) for a dissimilar
    one.
    """
    if similarity_loss(h, s, params) <= 0:
        raise ValueError("inference requires a pair with positive similarity loss")
    proj_i = model.projection.T @ pair.x_i
    proj_j = model.projection.T @ pair.x_j
    new_i, new_j, plan = _select_flips(
        model.projection,
        proj_i,
        proj_j,
        h.i_code.signs.astype(np.int64),
        h.j_code.signs.astype(np.int64),
        s,
        params,
    )
    g = CodePair(HashCode.from_signs(new_i), HashCode.from_signs(new_j))
    return g, plan
