"""Per-pair passive-aggressive training loop.

Each round receives one labeled pair: both vectors are (optionally)
kernel-mapped, centered against the running mean, and encoded. A pair with
zero similarity loss leaves the model untouched. Otherwise the corrected
code pair is inferred, the prediction loss computed, and the projection
matrix moves by tau * x (g - h)^T with

    tau = min(C, loss / ||x (g - h)^T||_F^2),

which only touches the columns whose bits were flipped. Training does not
start until `warmup` vectors have been buffered; those vectors seed the
running mean and, in kernel mode, become the anchor points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .codes import HashCode
from .inference import EMPTY_PLAN, SIDE_I, FlipPlan, _select_flips
from .kernel import KernelMapper, fit_anchors, map_many, map_one
from .loss import CodePair, LossParams, PairSample, similarity_loss
from .model import HashModel, init_lsh


@dataclass(frozen=True)
class TrainerConfig:
    """Hyperparameters of one training run.

    Defaults: 48 bits, alpha=0, beta=0.5, C=0.1, 256 warmup samples,
    kernel mapping off.
    """

    n_bits: int = 48
    alpha: int = 0
    beta: float = 0.5
    c: float = 0.1
    seed: int = 0
    warmup: int = 256
    use_kernel: bool = False
    sigma: float = 1.0

    def __post_init__(self):
        self.loss_params()  # validates alpha/beta/n_bits
        if not self.c > 0:
            raise ValueError(f"C must be positive, got {self.c}")
        if self.warmup < 1:
            raise ValueError(f"warmup must be >= 1, got {self.warmup}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def loss_params(self) -> LossParams:
        return LossParams(alpha=self.alpha, beta=self.beta, n_bits=self.n_bits)

    def with_seed(self, seed: int) -> "TrainerConfig":
        return replace(self, seed=seed)


class CenteringPipeline:
    """Warmup buffer, optional kernel map, and the online mean.

    One pipeline serves one data stream; ensembles share a single pipeline
    across their models because centering is a property of the stream, not
    of any model.
    """

    def __init__(self, warmup: int, use_kernel: bool = False, sigma: float = 1.0):
        if warmup < 1:
            raise ValueError("warmup must be >= 1")
        self.warmup = warmup
        self.use_kernel = use_kernel
        self.sigma = sigma
        self.kernel: KernelMapper | None = None
        self.mu: np.ndarray | None = None
        self.count = 0
        self._buffer: list[np.ndarray] | None = []

    @property
    def ready(self) -> bool:
        return self.mu is not None

    @property
    def buffered_count(self) -> int:
        """Vectors seen so far: warmup buffer length before ready, count after."""
        return self.count if self.ready else len(self._buffer)

    @property
    def raw_dim(self) -> int | None:
        if self._buffer:
            return self._buffer[0].shape[0]
        if self.kernel is not None:
            return self.kernel.raw_dim
        return self.mu.shape[0] if self.mu is not None else None

    @property
    def dim(self) -> int | None:
        """Model input dimension: anchor count in kernel mode, else raw."""
        if not self.ready:
            return None
        return self.mu.shape[0]

    def ingest_warmup(self, x) -> bool:
        """Buffer one raw vector; returns True once the pipeline is ready."""
        if self.ready:
            raise ValueError("warmup ingestion after training has started")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("warmup vectors must be 1-d")
        if not np.all(np.isfinite(x)):
            raise ValueError("warmup vectors must be finite")
        if self._buffer and x.shape != self._buffer[0].shape:
            raise ValueError("warmup vectors must share one dimension")
        self._buffer.append(x)
        if len(self._buffer) >= self.warmup:
            self._finalize()
        return self.ready

    def _finalize(self):
        raw = np.stack(self._buffer)
        if self.use_kernel:
            self.kernel = fit_anchors(raw, sigma=self.sigma)
            mapped = map_many(self.kernel, raw)
        else:
            mapped = raw
        self.mu = mapped.mean(axis=0)
        self.count = mapped.shape[0]
        self._buffer = None

    def _map(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kernel is not None:
            return map_one(self.kernel, x)
        if x.shape != self.mu.shape:
            raise ValueError(f"expected vector of length {self.mu.shape[0]}, got {x.shape}")
        return x

    def center(self, x) -> np.ndarray:
        """Center against the mean so far, then fold x into the mean."""
        if not self.ready:
            raise ValueError("pipeline not ready: warmup incomplete")
        z = self._map(x)
        centered = z - self.mu
        self.count += 1
        self.mu = self.mu + (z - self.mu) / self.count
        return centered

    def transform(self, x) -> np.ndarray:
        """Center one vector read-only (no mean update)."""
        if not self.ready:
            raise ValueError("pipeline not ready: warmup incomplete")
        return self._map(x) - self.mu

    def state_nbytes(self) -> int:
        total = 0
        if self.mu is not None:
            total += self.mu.nbytes
        if self.kernel is not None:
            total += self.kernel.anchors.nbytes
        if self._buffer:
            total += sum(v.nbytes for v in self._buffer)
        return total


@dataclass(frozen=True)
class UpdateReport:
    """Diagnostics of one training round.

    `updated` is True exactly when the similarity loss was positive and the
    step was not degenerate. A degenerate step is one where every flipped
    side had a zero centered vector, leaving no direction to move in; it is
    reported and skipped rather than raised, since aborting a stream over
    an uninformative pair would be worse.
    """

    step: int
    label: int
    similarity_loss: float
    prediction_loss: float
    tau: float
    update_norm_sq: float
    flips: FlipPlan
    updated: bool
    degenerate: bool
    h_codes: CodePair
    g_codes: CodePair | None
    centered_i: np.ndarray
    centered_j: np.ndarray


class OnlineHashTrainer:
    """Sequentially-owned training state for a single hash model."""

    def __init__(self, config: TrainerConfig, pipeline: CenteringPipeline | None = None):
        self.config = config
        self.params = config.loss_params()
        self.pipeline = pipeline if pipeline is not None else CenteringPipeline(
            config.warmup, use_kernel=config.use_kernel, sigma=config.sigma
        )
        self._w: np.ndarray | None = None
        self._w_init: np.ndarray | None = None
        self.steps = 0
        self.updates = 0

    # -- lifecycle ---------------------------------------------------------

    def ingest_warmup(self, x) -> bool:
        """Feed one pre-training vector; returns True once ready."""
        self.pipeline.ingest_warmup(x)
        self.ensure_ready()
        return self.ready

    def ensure_ready(self):
        """Initialize the projection matrix once the pipeline is ready."""
        if self._w is None and self.pipeline.ready:
            w = init_lsh(self.pipeline.dim, self.config.n_bits, self.config.seed)
            self._w = np.array(w.projection)  # mutable working copy
            self._w_init = self._w.copy()
            self._w_init.setflags(write=False)

    @property
    def ready(self) -> bool:
        return self._w is not None

    @property
    def model(self) -> HashModel:
        """Immutable snapshot of the current projection matrix."""
        if self._w is None:
            raise ValueError("trainer not ready: warmup incomplete")
        return HashModel(self._w.copy())

    @property
    def initial_model(self) -> HashModel:
        if self._w_init is None:
            raise ValueError("trainer not ready: warmup incomplete")
        return HashModel(self._w_init.copy())

    @property
    def mu(self) -> np.ndarray:
        if not self.pipeline.ready:
            raise ValueError("trainer not ready: warmup incomplete")
        return self.pipeline.mu.copy()

    @property
    def kernel(self) -> KernelMapper | None:
        return self.pipeline.kernel

    @property
    def samples_seen(self) -> int:
        return self.pipeline.count

    # -- training ----------------------------------------------------------

    def step(self, pair: PairSample) -> UpdateReport:
        """Run one training round: center both vectors, then update."""
        if not self.ready:
            raise ValueError("trainer not ready: warmup incomplete")
        x_i = self.pipeline.center(pair.x_i)
        x_j = self.pipeline.center(pair.x_j)
        return self.step_centered(x_i, x_j, pair.s)

    def peek_loss(self, x_i: np.ndarray, x_j: np.ndarray, s: int) -> float:
        """Similarity loss of already-centered vectors; no state change."""
        h = self._encode_pair(x_i, x_j)[0]
        return similarity_loss(h, s, self.params)

    def _encode_pair(self, x_i, x_j):
        proj_i = self._w.T @ x_i
        proj_j = self._w.T @ x_j
        signs_i = np.where(proj_i >= 0, 1, -1)
        signs_j = np.where(proj_j >= 0, 1, -1)
        h = CodePair(HashCode.from_signs(signs_i), HashCode.from_signs(signs_j))
        return h, proj_i, proj_j, signs_i, signs_j

    def step_centered(self, x_i: np.ndarray, x_j: np.ndarray, s: int) -> UpdateReport:
        """Run one round on vectors that are already kernel-mapped and centered.

        This is the entry point ensembles use after centering a pair once
        through their shared pipeline.
        """
        if not self.ready:
            raise ValueError("trainer not ready: warmup incomplete")
        self.steps += 1
        h, proj_i, proj_j, signs_i, signs_j = self._encode_pair(x_i, x_j)
        r_loss = similarity_loss(h, s, self.params)
        if r_loss == 0.0:
            return UpdateReport(
                step=self.steps,
                label=s,
                similarity_loss=0.0,
                prediction_loss=0.0,
                tau=0.0,
                update_norm_sq=0.0,
                flips=EMPTY_PLAN,
                updated=False,
                degenerate=False,
                h_codes=h,
                g_codes=None,
                centered_i=x_i,
                centered_j=x_j,
            )

        new_i, new_j, plan = _select_flips(
            self._w, proj_i, proj_j, signs_i, signs_j, s, self.params
        )
        g = CodePair(HashCode.from_signs(new_i), HashCode.from_signs(new_j))
        ell = (
            float((signs_i - new_i) @ proj_i + (signs_j - new_j) @ proj_j)
            + math.sqrt(r_loss)
        )

        # ||x (g - h)^T||_F^2 collapses to 4 (a ||x_i||^2 + b ||x_j||^2)
        # because each flipped column is -2 h[k] times one side's vector.
        on_i, on_j = plan.sides()
        denom = 4.0 * (
            on_i * float(x_i @ x_i) + on_j * float(x_j @ x_j)
        )
        if denom == 0.0:
            return UpdateReport(
                step=self.steps,
                label=s,
                similarity_loss=r_loss,
                prediction_loss=ell,
                tau=0.0,
                update_norm_sq=0.0,
                flips=plan,
                updated=False,
                degenerate=True,
                h_codes=h,
                g_codes=g,
                centered_i=x_i,
                centered_j=x_j,
            )

        tau = min(self.config.c, ell / denom)
        for k, side in plan.flips:
            if side == SIDE_I:
                self._w[:, k] += (tau * (-2.0 * signs_i[k])) * x_i
            else:
                self._w[:, k] += (tau * (-2.0 * signs_j[k])) * x_j
        self.updates += 1

        return UpdateReport(
            step=self.steps,
            label=s,
            similarity_loss=r_loss,
            prediction_loss=ell,
            tau=tau,
            update_norm_sq=denom,
            flips=plan,
            updated=True,
            degenerate=False,
            h_codes=h,
            g_codes=g,
            centered_i=x_i,
            centered_j=x_j,
        )

    def state_nbytes(self) -> int:
        """Bytes held by the training state; constant once training runs."""
        total = self.pipeline.state_nbytes()
        if self._w is not None:
            total += self._w.nbytes + self._w_init.nbytes
        return total
