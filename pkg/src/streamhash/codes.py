"""Packed binary codes and Hamming distance.

A code is a fixed-length sequence of signs in {-1, +1}. Codes are stored
bit-packed (one bit per sign, 1 for +1 and 0 for -1) in little-endian
64-bit words, so Hamming distance costs O(r/64) word operations via
XOR + popcount. Bit k lives in word k // 64 at bit position k % 64,
which makes the byte layout identical to the on-disk packed format
(byte k // 8, bit k % 8).
"""

from __future__ import annotations

import numpy as np

WORD_BITS = 64


def _n_words(n_bits: int) -> int:
    return (n_bits + WORD_BITS - 1) // WORD_BITS


def _n_bytes(n_bits: int) -> int:
    return (n_bits + 7) // 8


def _pack_bit_rows(bits: np.ndarray) -> np.ndarray:
    """Pack a (n, r) boolean/0-1 matrix into (n, ceil(r/64)) uint64 words."""
    packed = np.packbits(bits.astype(np.uint8, copy=False), axis=1, bitorder="little")
    n_words = _n_words(bits.shape[1])
    if packed.shape[1] < 8 * n_words:
        pad = np.zeros((packed.shape[0], 8 * n_words - packed.shape[1]), dtype=np.uint8)
        packed = np.hstack([packed, pad])
    return packed.view("<u8").reshape(bits.shape[0], n_words)


def _unpack_words(words: np.ndarray, n_bits: int) -> np.ndarray:
    """Unpack (n, n_words) uint64 rows back to a (n, n_bits) 0/1 uint8 matrix."""
    as_bytes = words.reshape(words.shape[0], -1).view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=1, bitorder="little")
    return bits[:, :n_bits]


class HashCode:
    """An r-bit sign vector, bit-packed.

    Immutable after construction; safe to share across threads.
    """

    __slots__ = ("words", "n_bits")

    def __init__(self, words: np.ndarray, n_bits: int):
        if n_bits < 1:
            raise ValueError("code length must be >= 1")
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if words.shape != (_n_words(n_bits),):
            raise ValueError(f"expected {_n_words(n_bits)} words for {n_bits} bits")
        # mask tail bits so equality and popcount never see stale padding
        tail = n_bits % WORD_BITS
        if tail:
            words = words.copy()
            words[-1] &= np.uint64((1 << tail) - 1)
        words.setflags(write=False)
        self.words = words
        self.n_bits = n_bits

    @classmethod
    def from_signs(cls, signs) -> "HashCode":
        """Build from a sequence of {-1, +1} signs."""
        signs = np.asarray(signs)
        if signs.ndim != 1 or signs.size < 1:
            raise ValueError("signs must be a non-empty 1-d sequence")
        if not np.all(np.abs(signs) == 1):
            raise ValueError("signs must be -1 or +1")
        bits = (signs > 0).reshape(1, -1)
        return cls(_pack_bit_rows(bits)[0], signs.size)

    @classmethod
    def from_bytes(cls, data: bytes, n_bits: int) -> "HashCode":
        if len(data) != _n_bytes(n_bits):
            raise ValueError(f"expected {_n_bytes(n_bits)} bytes for {n_bits} bits")
        buf = np.zeros(8 * _n_words(n_bits), dtype=np.uint8)
        buf[: len(data)] = np.frombuffer(data, dtype=np.uint8)
        return cls(buf.view("<u8"), n_bits)

    @property
    def signs(self) -> np.ndarray:
        """The code as an int8 array of {-1, +1}; round-trips losslessly."""
        bits = _unpack_words(self.words.reshape(1, -1), self.n_bits)[0]
        return (bits.astype(np.int8) * 2) - 1

    def to_bytes(self) -> bytes:
        """Packed little-endian bytes, ceil(r/8) long, padding bits zero."""
        return self.words.tobytes()[: _n_bytes(self.n_bits)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, HashCode):
            return NotImplemented
        return self.n_bits == other.n_bits and bool(np.array_equal(self.words, other.words))

    def __hash__(self) -> int:
        return hash((self.n_bits, self.words.tobytes()))

    def __repr__(self) -> str:
        return f"HashCode({self.n_bits} bits)"


def hamming_distance(a: HashCode, b: HashCode) -> int:
    """Number of positions where two equal-length codes differ."""
    if a.n_bits != b.n_bits:
        raise ValueError(f"code length mismatch: {a.n_bits} vs {b.n_bits}")
    return int(np.bitwise_count(a.words ^ b.words).sum())


class PackedCodes:
    """A batch of n equal-length codes, packed one row per code.

    Backs the retrieval path: distances from one query to all rows cost
    a single vectorized XOR + popcount pass.
    """

    __slots__ = ("words", "n_bits")

    def __init__(self, words: np.ndarray, n_bits: int):
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != _n_words(n_bits):
            raise ValueError("words must be (n, n_words) for the given bit count")
        tail = n_bits % WORD_BITS
        if tail and words.shape[0]:
            words = words.copy()
            words[:, -1] &= np.uint64((1 << tail) - 1)
        words.setflags(write=False)
        self.words = words
        self.n_bits = n_bits

    @classmethod
    def from_bit_matrix(cls, bits: np.ndarray) -> "PackedCodes":
        """Pack a (n, r) matrix of truth values (True meaning +1)."""
        bits = np.asarray(bits)
        if bits.ndim != 2:
            raise ValueError("bit matrix must be 2-d")
        return cls(_pack_bit_rows(bits), bits.shape[1])

    @classmethod
    def from_codes(cls, codes: list[HashCode]) -> "PackedCodes":
        if not codes:
            raise ValueError("need at least one code")
        n_bits = codes[0].n_bits
        if any(c.n_bits != n_bits for c in codes):
            raise ValueError("codes must share one length")
        return cls(np.stack([c.words for c in codes]), n_bits)

    @classmethod
    def empty(cls, n_bits: int) -> "PackedCodes":
        return cls(np.zeros((0, _n_words(n_bits)), dtype=np.uint64), n_bits)

    @classmethod
    def from_packed_bytes(cls, data: bytes, n: int, n_bits: int) -> "PackedCodes":
        row_bytes = _n_bytes(n_bits)
        if len(data) != n * row_bytes:
            raise ValueError(f"expected {n * row_bytes} bytes, got {len(data)}")
        buf = np.zeros((n, 8 * _n_words(n_bits)), dtype=np.uint8)
        if n:
            buf[:, :row_bytes] = np.frombuffer(data, dtype=np.uint8).reshape(n, row_bytes)
        return cls(buf.view("<u8"), n_bits)

    def __len__(self) -> int:
        return self.words.shape[0]

    def row(self, i: int) -> HashCode:
        return HashCode(self.words[i], self.n_bits)

    def sign_matrix(self) -> np.ndarray:
        """All codes as a (n, r) int8 matrix of {-1, +1}."""
        bits = _unpack_words(self.words, self.n_bits)
        return (bits.astype(np.int8) * 2) - 1

    def to_bytes(self) -> bytes:
        """Row-major packed bytes, ceil(r/8) per code, padding bits zero."""
        row_bytes = _n_bytes(self.n_bits)
        return self.words.view(np.uint8)[:, :row_bytes].tobytes()

    def hamming_to(self, query: HashCode) -> np.ndarray:
        """Hamming distance from the query to every row, as an int64 array."""
        if query.n_bits != self.n_bits:
            raise ValueError(f"code length mismatch: {query.n_bits} vs {self.n_bits}")
        return np.bitwise_count(self.words ^ query.words[None, :]).sum(axis=1, dtype=np.int64)
