"""HTTP service wrapping the streaming hash-learning core.

A session owns one ensemble trainer plus an optional in-memory code
database. Clients stream warmup vectors and labeled pairs in, snapshot
the model file at any round boundary, and run Hamming queries against
the stored codes while training continues. Steps within a session are
serialized by a per-session lock; the trained state itself is strictly
sequential.
"""

from __future__ import annotations

import io
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Response

from ..codes import PackedCodes
from ..ensemble import EnsembleTrainer
from ..evaluation import BoundMonitor, rank_by_distance
from ..formats import bundle_from_ensemble, write_model
from ..loss import PairSample
from ..model import encode_many
from ..trainer import TrainerConfig
from .schemas import (
    DatabaseState,
    ModelStepReport,
    Neighbor,
    PairBatch,
    PairResults,
    QueryRequest,
    QueryResponse,
    ServiceInfo,
    SessionConfig,
    SessionCreated,
    SessionStatus,
    StepOutcome,
    VectorBatch,
    WarmupResult,
)


@dataclass
class _Session:
    ensemble: EnsembleTrainer
    monitor: BoundMonitor
    raw_items: list[np.ndarray] = field(default_factory=list)
    codes: list[PackedCodes] | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def database_size(self) -> int:
        return len(self.raw_items)


def _report_out(report) -> ModelStepReport:
    return ModelStepReport(
        similarity_loss=report.similarity_loss,
        prediction_loss=report.prediction_loss,
        tau=report.tau,
        updated=report.updated,
        degenerate=report.degenerate,
        flips=[(k, side) for k, side in report.flips.flips],
    )


def create_app() -> FastAPI:
    app = FastAPI(title="streamhash", description="online hash-function learning service")
    sessions: dict[str, _Session] = {}

    def _get(session_id: str) -> _Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return session

    def _require_ready(session: _Session):
        if not session.ensemble.ready:
            raise HTTPException(status_code=409, detail="session still in warmup")

    @app.get("/", response_model=ServiceInfo)
    def info():
        return ServiceInfo(status="ok", sessions=len(sessions))

    @app.post("/sessions", response_model=SessionCreated)
    def create_session(config: SessionConfig):
        try:
            trainer_config = TrainerConfig(
                n_bits=config.bits,
                alpha=config.alpha,
                beta=config.beta,
                c=config.c,
                seed=config.seed,
                warmup=config.warmup,
                use_kernel=config.kernel,
            )
            ensemble = EnsembleTrainer(trainer_config, n_models=config.models)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session_id = uuid.uuid4().hex
        sessions[session_id] = _Session(
            ensemble=ensemble, monitor=BoundMonitor(c=config.c)
        )
        return SessionCreated(session_id=session_id)

    @app.get("/sessions/{session_id}", response_model=SessionStatus)
    def session_status(session_id: str):
        session = _get(session_id)
        with session.lock:
            ens = session.ensemble
            return SessionStatus(
                session_id=session_id,
                ready=ens.ready,
                models=ens.n_models,
                bits=ens.config.n_bits,
                samples_seen=ens.pipeline.count,
                steps=ens.steps,
                database_size=session.database_size,
                cumulative_loss=session.monitor.cumulative_r,
                max_update_norm_sq=session.monitor.f_squared,
                c_floor=session.monitor.c_floor,
            )

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        if sessions.pop(session_id, None) is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return {"deleted": session_id}

    @app.post("/sessions/{session_id}/warmup", response_model=WarmupResult)
    def warmup(session_id: str, batch: VectorBatch):
        session = _get(session_id)
        with session.lock:
            ens = session.ensemble
            if ens.ready:
                raise HTTPException(status_code=409, detail="session already trained past warmup")
            try:
                for vec in batch.vectors:
                    ens.ingest_warmup(np.asarray(vec, dtype=np.float64))
                    if ens.ready:
                        break
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            buffered = ens.pipeline.buffered_count
            return WarmupResult(
                ready=ens.ready,
                buffered=buffered,
                remaining=max(0, ens.config.warmup - buffered),
            )

    @app.post("/sessions/{session_id}/pairs", response_model=PairResults)
    def submit_pairs(session_id: str, batch: PairBatch):
        session = _get(session_id)
        with session.lock:
            ens = session.ensemble
            outcomes = []
            for pair in batch.pairs:
                try:
                    sample = PairSample(
                        x_i=np.asarray(pair.x_i, dtype=np.float64),
                        x_j=np.asarray(pair.x_j, dtype=np.float64),
                        s=pair.s,
                    )
                    report = ens.consume(sample)
                except ValueError as exc:
                    raise HTTPException(status_code=400, detail=str(exc))
                if report is None:
                    outcomes.append(StepOutcome(phase="warmup"))
                    continue
                for model_report in report.reports:
                    if model_report is not None:
                        session.monitor.observe(model_report)
                outcomes.append(
                    StepOutcome(
                        phase="step",
                        selected=report.selected,
                        losses=list(report.losses),
                        r_star=list(report.r_star),
                        reports=[
                            None if r is None else _report_out(r) for r in report.reports
                        ],
                    )
                )
            return PairResults(results=outcomes)

    @app.get("/sessions/{session_id}/model")
    def download_model(session_id: str):
        session = _get(session_id)
        with session.lock:
            _require_ready(session)
            buf = io.BytesIO()
            write_model(buf, bundle_from_ensemble(session.ensemble))
            return Response(
                content=buf.getvalue(), media_type="application/octet-stream"
            )

    @app.get("/sessions/{session_id}/metrics")
    def metrics(session_id: str):
        session = _get(session_id)
        with session.lock:
            body = f"{BoundMonitor.CSV_HEADER}\n{session.monitor.csv_row()}\n"
            return Response(content=body, media_type="text/csv")

    @app.post("/sessions/{session_id}/database", response_model=DatabaseState)
    def add_items(session_id: str, batch: VectorBatch):
        session = _get(session_id)
        with session.lock:
            _require_ready(session)
            try:
                new_codes = _encode_batch(session.ensemble, batch.vectors)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            session.raw_items.extend(
                np.asarray(v, dtype=np.float64) for v in batch.vectors
            )
            if session.codes is None:
                session.codes = new_codes
            else:
                session.codes = [
                    PackedCodes(np.vstack([old.words, new.words]), old.n_bits)
                    for old, new in zip(session.codes, new_codes)
                ]
            return DatabaseState(size=session.database_size)

    @app.post("/sessions/{session_id}/database/reencode", response_model=DatabaseState)
    def reencode(session_id: str):
        session = _get(session_id)
        with session.lock:
            _require_ready(session)
            if session.raw_items:
                session.codes = _encode_batch(session.ensemble, session.raw_items)
            return DatabaseState(size=session.database_size)

    @app.post("/sessions/{session_id}/query", response_model=QueryResponse)
    def query(session_id: str, request: QueryRequest):
        session = _get(session_id)
        with session.lock:
            _require_ready(session)
            if not session.raw_items:
                raise HTTPException(status_code=409, detail="session database is empty")
            try:
                query_codes = _encode_batch(session.ensemble, request.vectors)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            k = min(request.k, session.database_size)
            results = []
            for q in range(len(request.vectors)):
                dists = np.minimum.reduce(
                    [
                        db.hamming_to(qc.row(q))
                        for qc, db in zip(query_codes, session.codes)
                    ]
                )
                order = rank_by_distance(dists)[:k]
                results.append(
                    [Neighbor(index=int(i), distance=int(dists[i])) for i in order]
                )
            return QueryResponse(results=results)

    return app


def _encode_batch(ensemble: EnsembleTrainer, vectors) -> list[PackedCodes]:
    xs = np.asarray(vectors, dtype=np.float64)
    if xs.ndim != 2:
        raise ValueError("vectors must be a non-empty batch of equal-length rows")
    pipeline = ensemble.pipeline
    centered = np.stack([pipeline.transform(x) for x in xs])
    return [encode_many(t.model, centered) for t in ensemble.trainers]


app = create_app()
