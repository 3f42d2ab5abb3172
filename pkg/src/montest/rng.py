"""Counter-based random streams.

Every random value is a pure function of ``(seed, stream index, draw index)``:
draw ``j`` of a stream is ``mix64(key + (j + 1) * GAMMA)`` where ``key`` is
derived from the seed and the stream index.  This is SplitMix64 started from a
per-stream state, which makes it cheap to evaluate for many streams at once
with numpy.  The batch simulator relies on this to reproduce, bit for bit,
the trials that :class:`Stream` produces one at a time.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_STREAM_SALT = 0x632BE59BD9B4E019
_CHILD_SALT = 0xD1B54A32D192ED03

_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, index: int) -> int:
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return mix64(seed ^ mix64(index + _STREAM_SALT))


def stream_keys(seed: int, indices) -> np.ndarray:
    """Vectorized :func:`stream_key` over an array of stream indices."""
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    idx = np.asarray(indices, dtype=np.uint64)
    return mix64_array(np.uint64(seed) ^ mix64_array(idx + np.uint64(_STREAM_SALT)))


def draw_array(keys: np.ndarray, j: int) -> np.ndarray:
    """Draw ``j`` (0-based) of every stream whose key is in ``keys``."""
    offset = np.uint64(((j + 1) * GAMMA) & MASK64)
    return mix64_array(keys + offset)


def below_array(x: np.ndarray, m: int) -> np.ndarray:
    """Exact ``floor(x * m / 2**64)`` for uint64 ``x`` and ``1 <= m < 2**32``."""
    mm = np.uint64(m)
    hi = (x >> np.uint64(32)) * mm
    lo = ((x & np.uint64(0xFFFFFFFF)) * mm) >> np.uint64(32)
    return (hi + lo) >> np.uint64(32)


class Stream:
    """A single random stream, identified by ``(seed, index)``.

    Not thread-safe: each stream has one owner at a time.  Use
    ``Stream(seed, trial)`` to give every Monte Carlo trial its own stream.
    """

    __slots__ = ("key", "counter")

    def __init__(self, seed: int = 0, index: int = 0, *, key: int | None = None):
        self.key = stream_key(seed, index) if key is None else key & MASK64
        self.counter = 0

    def next64(self) -> int:
        self.counter += 1
        return mix64(self.key + self.counter * GAMMA)

    def next64_array(self, size: int) -> np.ndarray:
        j = np.arange(self.counter + 1, self.counter + 1 + size, dtype=np.uint64)
        self.counter += size
        return mix64_array(np.uint64(self.key) + j * np.uint64(GAMMA))

    def below(self, m: int) -> int:
        """Uniform integer in ``[0, m)``."""
        if m < 1:
            raise ValueError("m must be positive")
        return (self.next64() * m) >> 64

    def below_array(self, m: int, size: int) -> np.ndarray:
        if not 1 <= m < 1 << 32:
            raise ValueError("m must lie in [1, 2**32)")
        return below_array(self.next64_array(size), m)

    def getrandbits(self, nbits: int) -> int:
        """Uniform integer with ``nbits`` bits, one 64-bit draw per word."""
        if nbits <= 64:
            return self.next64() & ((1 << nbits) - 1)
        words = self.next64_array(-(-nbits // 64))
        value = int.from_bytes(words.astype("<u8").tobytes(), "little")
        return value & ((1 << nbits) - 1)

    def random(self) -> float:
        """Uniform float in ``[0, 1)`` with 53 bits of precision."""
        return (self.next64() >> 11) * (1.0 / (1 << 53))

    def child(self, j: int) -> "Stream":
        """Independent sub-stream ``j`` of this stream."""
        return Stream(key=mix64(self.key ^ mix64(j + _CHILD_SALT)))
