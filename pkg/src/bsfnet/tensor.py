"""Array helpers and the deterministic random stream shared by every layer.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C order.
Randomness comes from :class:`RngStream`, a xoshiro256** generator whose
256-bit state is expanded with splitmix64 from a hash of ``(seed, stream_id)``.
The same pair always yields the same sequence, independent of platform.
"""

from __future__ import annotations

import hashlib
from typing import Callable, Union

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

Scalar = Union[int, float]


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two rank-2 tensors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def ewise(op: str, a: np.ndarray, b: Union[np.ndarray, Scalar, None] = None,
          f: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """Elementwise ``add``/``sub``/``mul``/``scale``/``map``.

    Tensor-tensor forms require equal shapes; only scalars broadcast.
    """
    a = np.asarray(a, dtype=np.float64)
    if op == "map":
        if f is None:
            raise ValueError("ewise('map') needs f")
        return as_tensor(f(a))
    if op == "scale":
        if not np.isscalar(b):
            raise DimensionError("ewise('scale') takes a scalar")
        return a * float(b)
    if op not in _BINARY:
        raise ValueError(f"unknown elementwise op {op!r}")
    if np.isscalar(b):
        return _BINARY[op](a, float(b))
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"ewise({op!r}): shapes {a.shape} and {b.shape} differ")
    return _BINARY[op](a, b)


# -- random streams ---------------------------------------------------------

def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new_state, output)."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def _mix(x: int) -> int:
    return splitmix64(x & MASK64)[1]


def label_to_u64(label: Union[int, str]) -> int:
    """Map a stream label to 64 bits; strings go through blake2b."""
    if isinstance(label, str):
        return int.from_bytes(hashlib.blake2b(label.encode(), digest_size=8).digest(), "little")
    return int(label) & MASK64


def derive_state(seed: int, stream_id: Union[int, str]) -> np.ndarray:
    key = _mix((seed & MASK64) ^ _mix(label_to_u64(stream_id) ^ 0xD1B54A32D192ED03))
    words = []
    for _ in range(4):
        key, out = splitmix64(key)
        words.append(out)
    return np.array(words, dtype=np.uint64)


@njit(cache=True)
def _xoshiro_fill(s, out_u64):
    for k in range(out_u64.shape[0]):
        s0, s1, s2, s3 = s[0], s[1], s[2], s[3]
        x = s1 * np.uint64(5)
        out_u64[k] = ((x << np.uint64(7)) | (x >> np.uint64(57))) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = (s3 << np.uint64(45)) | (s3 >> np.uint64(19))
        s[0] = s0
        s[1] = s1
        s[2] = s2
        s[3] = s3


class RngStream:
    """xoshiro256** stream identified by ``(seed, stream_id)``.

    Single-owner: do not share one stream between threads; derive children
    with :meth:`child` instead.
    """

    def __init__(self, seed: int, stream_id: Union[int, str] = 0):
        self.seed = int(seed) & MASK64
        self.stream_id = label_to_u64(stream_id)
        self.state = derive_state(self.seed, self.stream_id)

    @classmethod
    def from_state(cls, words) -> "RngStream":
        obj = cls.__new__(cls)
        obj.seed = 0
        obj.stream_id = 0
        obj.state = np.array([w & MASK64 for w in words], dtype=np.uint64)
        return obj

    def child(self, label: Union[int, str]) -> "RngStream":
        """Independent stream keyed by this stream's id and ``label``."""
        return RngStream(self.seed, _mix(self.stream_id ^ _mix(label_to_u64(label))))

    def next_u64(self, n: int) -> np.ndarray:
        out = np.empty(int(n), dtype=np.uint64)
        if n:
            _xoshiro_fill(self.state, out)
        return out

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1) built from the top 53 bits of each output."""
        if n < 0:
            raise ValueError("n must be non-negative")
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)

    def uniform_array(self, shape) -> np.ndarray:
        shape = tuple(int(s) for s in np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
        return self.uniform(int(np.prod(shape, dtype=np.int64))).reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")


def rng_uniform(stream: RngStream, n: int) -> np.ndarray:
    return stream.uniform(n)
