"""Dense numeric kernels, the project RNG, and the MMT1 tensor file format.

Matrices are plain 2-D ``float64`` numpy arrays in C (row-major) order.
Shape mismatches are errors; nothing here broadcasts implicitly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MMT1"
_HEADER = struct.Struct("<4sIII")

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


class NumericsError(ValueError):
    pass


class TensorFormatError(ValueError):
    """Base class for MMT1 decoding failures; ``code`` identifies the kind."""

    code = "format"


class BadMagicError(TensorFormatError):
    code = "bad_magic"


class ShapeMismatchError(TensorFormatError):
    code = "shape_mismatch"


class TruncatedError(TensorFormatError):
    code = "truncated"


def as_matrix(m, name="matrix"):
    """Return ``m`` as a finite, C-ordered 2-D float64 array."""
    a = np.ascontiguousarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise NumericsError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericsError(f"{name} has non-finite entries")
    return a


def softmax_rows(m):
    m = as_matrix(m)
    e = np.exp(m - m.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def logsumexp(v):
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise NumericsError("logsumexp of an empty vector")
    top = v.max()
    if top == -np.inf:
        return -np.inf
    return float(top + np.log(np.sum(np.exp(v - top))))


# --- RNG ---------------------------------------------------------------------
#
# Counter-based SplitMix64: draw k of a stream with key s is
#     x = s + (k + 1) * 0x9E3779B97F4A7C15            (mod 2^64)
#     x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9
#     x = (x ^ (x >> 27)) * 0x94D049BB133111EB
#     x =  x ^ (x >> 31)
# Uniform doubles use the top 53 bits. Sub-streams are keyed by
# mix(seed ^ fnv1a64(tag)), so a purpose tag always names the same stream.


def _mix64(x):
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * _MIX1
        x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def derive_seed(seed: int, tag) -> int:
    """Deterministic sub-seed for ``(seed, tag)``; tag may be str or int."""
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF) ^ fnv1a64(str(tag).encode("utf-8"))
    return int(_mix64(np.uint64(key)))


class Rng:
    """Counter-based SplitMix64 generator.

    Identical seeds give identical streams on every platform; ``spawn`` makes
    an independent stream for a named purpose.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.counter = 0

    def spawn(self, tag) -> "Rng":
        return Rng(derive_seed(self.seed, tag))

    def raw(self, size) -> np.ndarray:
        n = int(np.prod(size, dtype=np.int64)) if np.ndim(size) else int(size)
        k = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            x = np.uint64(self.seed) + k * _GOLDEN
        return _mix64(x).reshape(size)

    def random(self, size=()) -> np.ndarray | float:
        u = (self.raw(size if size != () else 1) >> np.uint64(11)).astype(np.float64)
        u *= 2.0**-53
        return float(u[0]) if size == () else u

    def uniform(self, low=0.0, high=1.0, size=()):
        return low + (high - low) * self.random(size)

    def normal(self, size=()):
        # Box-Muller, one normal per pair of uniforms.
        n = int(np.prod(size)) if size != () else 1
        u = self.random(2 * n).reshape(2, n)
        r = np.sqrt(-2.0 * np.log1p(-u[0]))
        out = r * np.cos(2.0 * np.pi * u[1])
        return float(out[0]) if size == () else out.reshape(size)

    def integers(self, low, high=None, size=()):
        """Integers in ``[low, high)``."""
        if high is None:
            low, high = 0, low
        span = int(high) - int(low)
        if span <= 0:
            raise NumericsError("empty integer range")
        draws = np.floor(self.random(size if size != () else 1) * span).astype(np.int64)
        draws = np.minimum(draws, span - 1) + int(low)
        return int(draws[0]) if size == () else draws

    def permutation(self, n: int) -> np.ndarray:
        # Fisher-Yates driven by one batch of uniforms.
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.random(n - 1)
        for i in range(n - 1, 0, -1):
            j = min(int(u[n - 1 - i] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def choice(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)``, sorted."""
        if k > n:
            raise NumericsError(f"cannot choose {k} of {n}")
        return np.sort(self.permutation(n)[:k])


# --- MMT1 tensor files --------------------------------------------------------


def encode_tensor(m) -> bytes:
    a = as_matrix(m)
    rows, cols = a.shape
    return _HEADER.pack(MAGIC, 2, rows, cols) + a.astype("<f8").tobytes(order="C")


def decode_tensor(blob: bytes) -> np.ndarray:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError("bad magic")
    if len(blob) < _HEADER.size:
        raise TruncatedError("truncated header")
    _, rank, rows, cols = _HEADER.unpack_from(blob)
    if rank != 2:
        raise ShapeMismatchError(f"unsupported rank {rank}")
    expected = _HEADER.size + 8 * rows * cols
    if len(blob) < expected:
        raise TruncatedError(f"truncated payload: {len(blob)} < {expected} bytes")
    if len(blob) > expected:
        raise ShapeMismatchError(f"size mismatch: {len(blob)} > {expected} bytes")
    data = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=_HEADER.size)
    return data.astype(np.float64).reshape(rows, cols)


def write_tensor(path, m) -> None:
    Path(path).write_bytes(encode_tensor(m))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())
