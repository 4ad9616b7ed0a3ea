"""Evaluation harness: pair labeling, pair streams, retrieval, mAP,
and the cumulative-loss bound monitor.

Labeling follows one of two policies. Under the class policy two items are
similar when their class labels match. Under the metric policy two items
are similar when either lies within the other's top fraction (default 5%)
of Euclidean nearest neighbors, with distance ties broken by index.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .codes import HashCode, PackedCodes
from .loss import PairSample
from .trainer import UpdateReport

POLICY_CLASS = "class"
POLICY_METRIC = "metric"
DEFAULT_NEIGHBOR_FRACTION = 0.05


class PairLabeler:
    """Similarity labels for index pairs of one dataset.

    Metric-policy neighbor lists are computed lazily per row and cached, so
    streaming many pairs touches each row's full distance profile once.
    """

    def __init__(
        self,
        features: np.ndarray,
        labels: np.ndarray | None = None,
        policy: str = POLICY_CLASS,
        neighbor_fraction: float = DEFAULT_NEIGHBOR_FRACTION,
    ):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 2:
            raise ValueError("need a (n, d) feature matrix with n >= 2")
        if policy not in (POLICY_CLASS, POLICY_METRIC):
            raise ValueError(f"unknown policy {policy!r}")
        if policy == POLICY_CLASS and labels is None:
            raise ValueError("class policy requires labels")
        if not 0 < neighbor_fraction <= 1:
            raise ValueError("neighbor fraction must be in (0, 1]")
        self.features = features
        self.labels = None if labels is None else np.asarray(labels)
        self.policy = policy
        self.n = features.shape[0]
        self.k = max(1, int(neighbor_fraction * self.n + 1e-9))
        self._neighbor_cache: dict[int, frozenset[int]] = {}

    def _neighbors(self, i: int) -> frozenset[int]:
        cached = self._neighbor_cache.get(i)
        if cached is not None:
            return cached
        d = np.linalg.norm(self.features - self.features[i], axis=1)
        d[i] = np.inf  # a point is not its own neighbor
        order = np.lexsort((np.arange(self.n), d))
        nb = frozenset(order[: self.k].tolist())
        self._neighbor_cache[i] = nb
        return nb

    def label(self, i: int, j: int) -> int:
        if i == j:
            raise ValueError("pair indices must differ")
        if self.policy == POLICY_CLASS:
            return 1 if self.labels[i] == self.labels[j] else -1
        if j in self._neighbors(i) or i in self._neighbors(j):
            return 1
        return -1


def pair_label(
    features: np.ndarray,
    i: int,
    j: int,
    policy: str = POLICY_CLASS,
    labels: np.ndarray | None = None,
    neighbor_fraction: float = DEFAULT_NEIGHBOR_FRACTION,
) -> int:
    """Label one pair; see PairLabeler for the cached streaming variant."""
    labeler = PairLabeler(features, labels=labels, policy=policy,
                          neighbor_fraction=neighbor_fraction)
    return labeler.label(i, j)


@dataclass(frozen=True)
class LabeledPair:
    i: int
    j: int
    sample: PairSample


def pair_stream(
    features: np.ndarray,
    policy: str = POLICY_CLASS,
    labels: np.ndarray | None = None,
    seed: int = 0,
    n_pairs: int = 0,
    balance: float | None = None,
    neighbor_fraction: float = DEFAULT_NEIGHBOR_FRACTION,
) -> Iterator[LabeledPair]:
    """Deterministic random pair sequence from one dataset.

    With `balance` set, rejection sampling holds the similar fraction to
    round(balance * n_pairs) pairs; if a quota cannot be filled after a
    bounded number of draws the stream raises instead of spinning.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValueError("need a (n, d) feature matrix with n >= 2")
    if balance is not None and not 0 <= balance <= 1:
        raise ValueError("balance must be in [0, 1]")
    labeler = PairLabeler(features, labels=labels, policy=policy,
                          neighbor_fraction=neighbor_fraction)
    rng = np.random.default_rng(seed)
    n = features.shape[0]

    quota = None
    if balance is not None:
        want_similar = int(round(balance * n_pairs))
        quota = {1: want_similar, -1: n_pairs - want_similar}

    emitted = 0
    attempts = 0
    max_attempts = max(10_000, 400 * n_pairs)
    while emitted < n_pairs:
        if attempts >= max_attempts:
            raise ValueError(
                f"could not reach the requested pair balance after {attempts} draws"
            )
        attempts += 1
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        s = labeler.label(int(i), int(j))
        if quota is not None:
            if quota[s] == 0:
                continue
            quota[s] -= 1
        emitted += 1
        yield LabeledPair(
            i=int(i),
            j=int(j),
            sample=PairSample(x_i=features[i], x_j=features[j], s=s),
        )


# -- retrieval ---------------------------------------------------------------


def rank_by_distance(distances: np.ndarray) -> np.ndarray:
    """Indices sorted by ascending distance, ties by ascending index."""
    distances = np.asarray(distances)
    return np.lexsort((np.arange(distances.shape[0]), distances))


def linear_scan(query: HashCode, database: PackedCodes) -> np.ndarray:
    """Full ranking of the database by Hamming distance to the query."""
    return rank_by_distance(database.hamming_to(query))


def mm_linear_scan(query_codes, databases: list[PackedCodes]) -> np.ndarray:
    """Ranking by minimum per-model Hamming distance across T models."""
    query_codes = list(query_codes)
    if len(query_codes) != len(databases) or not databases:
        raise ValueError("need one query code per database model")
    dists = np.minimum.reduce(
        [db.hamming_to(qc) for qc, db in zip(query_codes, databases)]
    )
    return rank_by_distance(dists)


# -- mean average precision ----------------------------------------------------


def average_precision(ranking: np.ndarray, relevant: set[int]) -> float:
    """AP over a full ranking with all relevant items in the denominator."""
    if not relevant:
        raise ValueError("relevant set must be non-empty")
    ranking = np.asarray(ranking)
    hits = 0
    total = 0.0
    for rank_minus_1, idx in enumerate(ranking.tolist()):
        if idx in relevant:
            hits += 1
            total += hits / (rank_minus_1 + 1)
    return total / len(relevant)


def mean_average_precision(rankings, truth) -> float:
    """Mean AP over queries; queries with empty relevant sets are skipped.

    `truth` maps query positions to sets of relevant database indices.
    A query with an empty relevant set is excluded with a warning rather
    than silently counted as zero.
    """
    aps = []
    for q, ranking in enumerate(rankings):
        relevant = truth[q]
        if not relevant:
            warnings.warn(f"query {q} has no relevant items; excluded from mAP")
            continue
        aps.append(average_precision(ranking, set(relevant)))
    if not aps:
        raise ValueError("no query had a non-empty relevant set")
    return float(np.mean(aps))


# -- cumulative-loss bound monitor ----------------------------------------------


class BoundMonitor:
    """Running accumulators for the cumulative-loss bound.

    Tracks the cumulative similarity loss, the running maximum update
    norm F^2, and the running floor sqrt(R)/F^2 that the margin parameter
    C must dominate for the bound to apply. With a registered comparator
    matrix U it also accumulates the comparator's prediction loss and
    exposes the bound slack.
    """

    CSV_HEADER = "step,cumulative_R,F2,slack,mAP"

    def __init__(self, c: float | None = None):
        self.c = c
        self.steps = 0
        self.cumulative_r = 0.0
        self.f_squared = 0.0
        self.c_floor = 0.0
        self.comparator: np.ndarray | None = None
        self.comparator_dist_sq: float | None = None
        self.cumulative_ell_u = 0.0

    def register_comparator(self, u: np.ndarray, w_init: np.ndarray):
        """Register a fixed matrix U and the initial projection W^1."""
        u = np.asarray(u, dtype=np.float64)
        w_init = np.asarray(w_init, dtype=np.float64)
        if u.shape != w_init.shape:
            raise ValueError("comparator and initial matrix shapes differ")
        self.comparator = u
        self.comparator_dist_sq = float(np.sum((u - w_init) ** 2))
        self.cumulative_ell_u = 0.0

    def observe(self, report: UpdateReport):
        """Fold one round's report into the accumulators."""
        self.steps += 1
        r_loss = report.similarity_loss
        if r_loss <= 0:
            return
        self.cumulative_r += r_loss
        if report.update_norm_sq > self.f_squared:
            self.f_squared = report.update_norm_sq
        if self.f_squared > 0:
            self.c_floor = max(self.c_floor, math.sqrt(r_loss) / self.f_squared)
        if self.comparator is not None and report.g_codes is not None:
            diff_i = report.h_codes.i_code.signs.astype(np.float64) - \
                report.g_codes.i_code.signs.astype(np.float64)
            diff_j = report.h_codes.j_code.signs.astype(np.float64) - \
                report.g_codes.j_code.signs.astype(np.float64)
            ell_u = (
                float(diff_i @ (self.comparator.T @ report.centered_i))
                + float(diff_j @ (self.comparator.T @ report.centered_j))
                + math.sqrt(r_loss)
            )
            self.cumulative_ell_u += ell_u

    def comparator_bound(self) -> float:
        """Full bound right-hand side F^2 (||U - W^1||^2 + 2 C sum ell_U)."""
        if self.comparator is None:
            raise ValueError("no comparator registered")
        if self.c is None:
            raise ValueError("bound needs the margin parameter C")
        return self.f_squared * (
            self.comparator_dist_sq + 2.0 * self.c * self.cumulative_ell_u
        )

    def reduced_bound(self) -> float:
        """Bound with the comparator loss term dropped: F^2 ||U - W^1||^2.

        This is the operative bound when the comparator realizes the
        stream (its cumulative prediction loss is zero or negative).
        """
        if self.comparator is None:
            raise ValueError("no comparator registered")
        return self.f_squared * self.comparator_dist_sq

    def slack(self) -> float:
        return self.reduced_bound() - self.cumulative_r

    def csv_row(self, map_score: float | None = None) -> str:
        slack = "" if self.comparator is None else repr(self.slack())
        map_field = "" if map_score is None else repr(float(map_score))
        return f"{self.steps},{self.cumulative_r!r},{self.f_squared!r},{slack},{map_field}"


def monitor_step(monitor: BoundMonitor, report: UpdateReport) -> BoundMonitor:
    """Functional alias for BoundMonitor.observe."""
    monitor.observe(report)
    return monitor
