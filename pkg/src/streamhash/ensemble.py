"""Multi-model training: T hash models with selective update.

All models share one centering pipeline and one set of loss thresholds but
start from different random projections. A similar pair updates only the
model with the smallest similarity loss (ties to the lowest index); a
dissimilar pair updates every model whose loss is positive. Retrieval
scores an item by the minimum per-model Hamming distance, a documented
stand-in for a dedicated Hamming index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import hamming_distance
from .loss import PairSample
from .trainer import CenteringPipeline, OnlineHashTrainer, TrainerConfig, UpdateReport

ALL_MODELS = None  # `selected` value for dissimilar pairs


@dataclass(frozen=True)
class EnsembleReport:
    """Per-round bookkeeping across all models.

    r_star[m] is the model's similarity loss when it was eligible for an
    update this round (the selected model on a similar pair, every model on
    a dissimilar pair) and 0 otherwise; summed over rounds it is the
    quantity the multi-model loss bound controls.
    """

    label: int
    losses: tuple[float, ...]
    selected: int | None
    r_star: tuple[float, ...]
    reports: tuple[UpdateReport | None, ...]

    @property
    def any_updated(self) -> bool:
        return any(r is not None and r.updated for r in self.reports)


class EnsembleTrainer:
    """T independently initialized trainers behind one shared pipeline.

    Model m uses seed `config.seed + m`, so a one-model ensemble follows
    exactly the same weight trajectory as a bare trainer with the same
    seed and stream.
    """

    def __init__(self, config: TrainerConfig, n_models: int = 1):
        if n_models < 1:
            raise ValueError(f"n_models must be >= 1, got {n_models}")
        self.config = config
        self.pipeline = CenteringPipeline(
            config.warmup, use_kernel=config.use_kernel, sigma=config.sigma
        )
        self.trainers = tuple(
            OnlineHashTrainer(config.with_seed(config.seed + m), pipeline=self.pipeline)
            for m in range(n_models)
        )
        self.steps = 0

    @property
    def n_models(self) -> int:
        return len(self.trainers)

    @property
    def ready(self) -> bool:
        return all(t.ready for t in self.trainers)

    def ingest_warmup(self, x) -> bool:
        self.pipeline.ingest_warmup(x)
        if self.pipeline.ready:
            for t in self.trainers:
                t.ensure_ready()
        return self.ready

    def mm_step(self, pair: PairSample) -> EnsembleReport:
        """One round over all models with shared centering."""
        if not self.ready:
            raise ValueError("ensemble not ready: warmup incomplete")
        x_i = self.pipeline.center(pair.x_i)
        x_j = self.pipeline.center(pair.x_j)
        self.steps += 1
        reports: list[UpdateReport | None] = [None] * self.n_models

        if pair.s == 1:
            losses = [t.peek_loss(x_i, x_j, pair.s) for t in self.trainers]
            selected = int(np.argmin(losses))  # first minimum: lowest index
            reports[selected] = self.trainers[selected].step_centered(x_i, x_j, pair.s)
            r_star = tuple(
                losses[m] if m == selected else 0.0 for m in range(self.n_models)
            )
        else:
            selected = ALL_MODELS
            for m, t in enumerate(self.trainers):
                reports[m] = t.step_centered(x_i, x_j, pair.s)
            losses = [r.similarity_loss for r in reports]
            r_star = tuple(losses)

        return EnsembleReport(
            label=pair.s,
            losses=tuple(losses),
            selected=selected,
            r_star=r_star,
            reports=tuple(reports),
        )

    def consume(self, pair: PairSample) -> EnsembleReport | None:
        """Feed one pair: warmup material until ready, a training round after.

        Returns None for pairs consumed by warmup.
        """
        if not self.ready:
            self.ingest_warmup(pair.x_i)
            if not self.ready:
                self.ingest_warmup(pair.x_j)
            else:
                # odd warmup count: the leftover vector still belongs to the
                # stream, so fold it into the mean instead of dropping it
                self.pipeline.center(pair.x_j)
            return None
        return self.mm_step(pair)

    def models(self) -> tuple:
        return tuple(t.model for t in self.trainers)

    def initial_models(self) -> tuple:
        return tuple(t.initial_model for t in self.trainers)

    def state_nbytes(self) -> int:
        return self.pipeline.state_nbytes() + sum(
            t.state_nbytes() - t.pipeline.state_nbytes() for t in self.trainers
        )


def mm_distance(item_codes, query_codes) -> int:
    """Minimum Hamming distance across per-model code pairs.

    With one model this is plain Hamming distance; any exact match under
    any model yields zero.
    """
    item_codes = list(item_codes)
    query_codes = list(query_codes)
    if len(item_codes) != len(query_codes) or not item_codes:
        raise ValueError("item and query must carry one code per model")
    return min(hamming_distance(a, b) for a, b in zip(item_codes, query_codes))
