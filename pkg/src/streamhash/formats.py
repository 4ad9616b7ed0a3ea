"""Binary file formats and the deployable model bundle.

Three little-endian formats, each opened by a 4-byte magic and a u16
version and (for models) closed by a CRC32 of every preceding byte:

    dataset  "OHDS": version u16, n u64, d u32, label_flag u8,
             then n*d float32 rows, then n u32 class labels if flagged.
    model    "OHMD": version u16, d u32 (raw dim), r u32, T u16,
             kernel_flag u8, m u32 if kernelized; mu (m or d float64),
             anchors (m*d float64, kernelized only), T projection matrices
             each (model_dim x r) float64 column-major; trailing CRC32.
    codes    "OHCB": version u16, n u64, r u32, T u16, then n*T packed
             codes of ceil(r/8) bytes each, item-major, padding bits zero.
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .codes import PackedCodes
from .kernel import DEFAULT_SIGMA, KernelMapper
from .model import HashModel, encode_many

MAGIC_DATASET = b"OHDS"
MAGIC_MODEL = b"OHMD"
MAGIC_CODES = b"OHCB"
FORMAT_VERSION = 1


class FormatError(Exception):
    """Raised for malformed, truncated, or incompatible files."""


@dataclass(frozen=True)
class ModelBundle:
    """Everything needed to encode: T models, the mean, optional anchors."""

    models: tuple[HashModel, ...]
    mu: np.ndarray
    kernel: KernelMapper | None = None

    def __post_init__(self):
        if not self.models:
            raise ValueError("bundle needs at least one model")
        dim = self.models[0].dim
        n_bits = self.models[0].n_bits
        if any(m.dim != dim or m.n_bits != n_bits for m in self.models):
            raise ValueError("all models must share one shape")
        mu = np.ascontiguousarray(self.mu, dtype=np.float64)
        if mu.shape != (dim,):
            raise ValueError(f"mu must have length {dim}")
        if self.kernel is not None and self.kernel.n_anchors != dim:
            raise ValueError("kernelized bundle needs one anchor per model input")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def n_models(self) -> int:
        return len(self.models)

    @property
    def n_bits(self) -> int:
        return self.models[0].n_bits

    @property
    def dim(self) -> int:
        """Model input dimension (anchor count when kernelized)."""
        return self.models[0].dim

    @property
    def raw_dim(self) -> int:
        return self.kernel.raw_dim if self.kernel is not None else self.dim

    def transform_many(self, xs: np.ndarray) -> np.ndarray:
        """Kernel-map (if configured) and center a (n, raw_dim) matrix."""
        from .kernel import map_many  # local import keeps module load light

        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.raw_dim:
            raise FormatError(
                f"data dimension {xs.shape[1] if xs.ndim == 2 else '?'} does not "
                f"match model input dimension {self.raw_dim}"
            )
        if self.kernel is not None:
            xs = map_many(self.kernel, xs)
        return xs - self.mu

    def encode_all(self, xs: np.ndarray) -> list[PackedCodes]:
        """Packed codes of every row under every model, one batch per model."""
        centered = self.transform_many(xs)
        return [encode_many(m, centered) for m in self.models]


def bundle_from_ensemble(ensemble) -> ModelBundle:
    """Snapshot a live ensemble into a persistable bundle."""
    if not ensemble.ready:
        raise ValueError("ensemble not ready: warmup incomplete")
    return ModelBundle(
        models=ensemble.models(),
        mu=ensemble.pipeline.mu.copy(),
        kernel=ensemble.pipeline.kernel,
    )


# -- dataset files ---------------------------------------------------------------


def write_dataset(path, features: np.ndarray, labels: np.ndarray | None = None):
    features = np.ascontiguousarray(features, dtype="<f4")
    if features.ndim != 2:
        raise ValueError("features must be a (n, d) matrix")
    n, d = features.shape
    if labels is not None:
        labels = np.ascontiguousarray(labels, dtype="<u4")
        if labels.shape != (n,):
            raise ValueError("labels must be one u32 per row")
    with _open_write(path) as f:
        f.write(MAGIC_DATASET)
        f.write(struct.pack("<HQIB", FORMAT_VERSION, n, d, 1 if labels is not None else 0))
        f.write(features.tobytes())
        if labels is not None:
            f.write(labels.tobytes())


def read_dataset(path) -> tuple[np.ndarray, np.ndarray | None]:
    data = _read_all(path)
    if data[:4] != MAGIC_DATASET:
        raise FormatError("not a dataset file (bad magic)")
    try:
        version, n, d, label_flag = struct.unpack_from("<HQIB", data, 4)
    except struct.error as exc:
        raise FormatError("truncated dataset header") from exc
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    if label_flag not in (0, 1):
        raise FormatError(f"bad label flag {label_flag}")
    if d < 1:
        raise FormatError("dataset dimension must be >= 1")
    offset = 4 + struct.calcsize("<HQIB")
    expected = offset + n * d * 4 + (n * 4 if label_flag else 0)
    if len(data) != expected:
        raise FormatError(f"dataset length {len(data)} != expected {expected}")
    features = np.frombuffer(data, dtype="<f4", count=n * d, offset=offset)
    features = features.reshape(n, d).astype(np.float64)
    labels = None
    if label_flag:
        labels = np.frombuffer(data, dtype="<u4", count=n, offset=offset + n * d * 4)
        labels = labels.astype(np.int64)
    return features, labels


# -- model files -----------------------------------------------------------------


def write_model(path, bundle: ModelBundle):
    if bundle.kernel is not None and bundle.kernel.sigma != DEFAULT_SIGMA:
        raise ValueError(
            "model files carry no bandwidth field; only the default kernel "
            f"bandwidth {DEFAULT_SIGMA} can be persisted"
        )
    buf = io.BytesIO()
    buf.write(MAGIC_MODEL)
    kernelized = bundle.kernel is not None
    buf.write(
        struct.pack(
            "<HIIHB",
            FORMAT_VERSION,
            bundle.raw_dim,
            bundle.n_bits,
            bundle.n_models,
            1 if kernelized else 0,
        )
    )
    if kernelized:
        buf.write(struct.pack("<I", bundle.kernel.n_anchors))
    buf.write(np.ascontiguousarray(bundle.mu, dtype="<f8").tobytes())
    if kernelized:
        buf.write(np.ascontiguousarray(bundle.kernel.anchors, dtype="<f8").tobytes())
    for m in bundle.models:
        buf.write(m.projection.astype("<f8").tobytes(order="F"))
    payload = buf.getvalue()
    with _open_write(path) as f:
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def read_model(path) -> ModelBundle:
    data = _read_all(path)
    if data[:4] != MAGIC_MODEL:
        raise FormatError("not a model file (bad magic)")
    if len(data) < 4 + struct.calcsize("<HIIHB") + 4:
        raise FormatError("truncated model file")
    payload, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise FormatError("model file checksum mismatch")
    version, raw_dim, n_bits, n_models, kernel_flag = struct.unpack_from("<HIIHB", payload, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported model version {version}")
    if kernel_flag not in (0, 1):
        raise FormatError(f"bad kernel flag {kernel_flag}")
    if n_models < 1 or n_bits < 1 or raw_dim < 1:
        raise FormatError("model header fields out of range")
    offset = 4 + struct.calcsize("<HIIHB")
    kernel = None
    model_dim = raw_dim
    if kernel_flag:
        (m,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        model_dim = m
    mu, offset = _take_f8(payload, offset, model_dim)
    if kernel_flag:
        anchors, offset = _take_f8(payload, offset, model_dim * raw_dim)
        kernel = KernelMapper(anchors=anchors.reshape(model_dim, raw_dim))
    models = []
    for _ in range(n_models):
        flat, offset = _take_f8(payload, offset, model_dim * n_bits)
        models.append(HashModel(flat.reshape((model_dim, n_bits), order="F")))
    if offset != len(payload):
        raise FormatError("model file has trailing bytes")
    return ModelBundle(models=tuple(models), mu=mu, kernel=kernel)


def _take_f8(data: bytes, offset: int, count: int) -> tuple[np.ndarray, int]:
    end = offset + count * 8
    if end > len(data):
        raise FormatError("model file truncated")
    return np.frombuffer(data, dtype="<f8", count=count, offset=offset).copy(), end


# -- codes files -----------------------------------------------------------------


def write_codes(path, per_model: list[PackedCodes]):
    """Write item-major codes: all T model codes of item 0, then item 1, ..."""
    if not per_model:
        raise ValueError("need codes for at least one model")
    n = len(per_model[0])
    n_bits = per_model[0].n_bits
    if any(len(pc) != n or pc.n_bits != n_bits for pc in per_model):
        raise ValueError("per-model code batches must agree in n and r")
    row_bytes = (n_bits + 7) // 8
    t = len(per_model)
    byte_rows = [
        np.frombuffer(pc.to_bytes(), dtype=np.uint8).reshape(n, row_bytes)
        for pc in per_model
    ]
    interleaved = (
        np.stack(byte_rows, axis=1).reshape(n * t * row_bytes)
        if n
        else np.zeros(0, dtype=np.uint8)
    )
    with _open_write(path) as f:
        f.write(MAGIC_CODES)
        f.write(struct.pack("<HQIH", FORMAT_VERSION, n, n_bits, t))
        f.write(interleaved.tobytes())


def read_codes(path) -> list[PackedCodes]:
    data = _read_all(path)
    if data[:4] != MAGIC_CODES:
        raise FormatError("not a codes file (bad magic)")
    try:
        version, n, n_bits, t = struct.unpack_from("<HQIH", data, 4)
    except struct.error as exc:
        raise FormatError("truncated codes header") from exc
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported codes version {version}")
    if n_bits < 1 or t < 1:
        raise FormatError("codes header fields out of range")
    offset = 4 + struct.calcsize("<HQIH")
    row_bytes = (n_bits + 7) // 8
    expected = offset + n * t * row_bytes
    if len(data) != expected:
        raise FormatError(f"codes length {len(data)} != expected {expected}")
    raw = np.frombuffer(data, dtype=np.uint8, offset=offset)
    if n:
        stacked = raw.reshape(n, t, row_bytes)
        return [
            PackedCodes.from_packed_bytes(stacked[:, m, :].tobytes(), n, n_bits)
            for m in range(t)
        ]
    return [PackedCodes.empty(n_bits) for _ in range(t)]


# -- small io helpers --------------------------------------------------------------


def _open_write(path):
    if hasattr(path, "write"):
        import contextlib

        return contextlib.nullcontext(path)
    return open(path, "wb")


def _read_all(path) -> bytes:
    if hasattr(path, "read"):
        return path.read()
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
