"""Request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field, field_validator


class SessionConfig(BaseModel):
    bits: int = 48
    alpha: int = 0
    beta: float = 0.5
    c: float = Field(default=0.1, gt=0)
    models: int = Field(default=1, ge=1)
    warmup: int = Field(default=256, ge=1)
    kernel: bool = False
    seed: int = 0


class SessionCreated(BaseModel):
    session_id: str


class SessionStatus(BaseModel):
    session_id: str
    ready: bool
    models: int
    bits: int
    samples_seen: int
    steps: int
    database_size: int
    cumulative_loss: float
    max_update_norm_sq: float
    c_floor: float


class VectorBatch(BaseModel):
    vectors: list[list[float]] = Field(min_length=1)


class WarmupResult(BaseModel):
    ready: bool
    buffered: int
    remaining: int


class PairIn(BaseModel):
    x_i: list[float]
    x_j: list[float]
    s: int

    @field_validator("s")
    @classmethod
    def _label_sign(cls, v: int) -> int:
        if v not in (-1, 1):
            raise ValueError("label must be -1 or +1")
        return v


class PairBatch(BaseModel):
    pairs: list[PairIn] = Field(min_length=1)


class ModelStepReport(BaseModel):
    similarity_loss: float
    prediction_loss: float
    tau: float
    updated: bool
    degenerate: bool
    flips: list[tuple[int, str]]


class StepOutcome(BaseModel):
    phase: str  # "warmup" or "step"
    selected: int | None = None
    losses: list[float] | None = None
    r_star: list[float] | None = None
    reports: list[ModelStepReport | None] | None = None


class PairResults(BaseModel):
    results: list[StepOutcome]


class DatabaseState(BaseModel):
    size: int


class QueryRequest(BaseModel):
    vectors: list[list[float]] = Field(min_length=1)
    k: int = Field(default=10, ge=1)


class Neighbor(BaseModel):
    index: int
    distance: int


class QueryResponse(BaseModel):
    results: list[list[Neighbor]]


class ServiceInfo(BaseModel):
    status: str
    sessions: int
