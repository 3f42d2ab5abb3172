"""Vertices, edges and random walks on the hypercube {0,1}^n.

Coordinates are numbered 1..n.  Coordinate ``i`` is bit ``i - 1`` of a
vertex's integer index, so index = sum(bit_i * 2**(i-1)).  When a vertex is
written as a bit string, coordinate 1 comes first (leftmost).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .rng import Stream

# Above this walk length, vertices are rebuilt with numpy instead of a loop.
_VECTOR_WALK = 256


def ceil_log2(n: int) -> int:
    """Smallest k with 2**k >= n (n >= 1)."""
    if n < 1:
        raise ValueError("n must be positive")
    return (n - 1).bit_length()


@dataclass(frozen=True, slots=True)
class Point:
    n: int
    index: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"dimension must be positive, got {self.n}")
        if self.index < 0 or self.index.bit_length() > self.n:
            raise ValueError(f"index {self.index} out of range for n={self.n}")

    @classmethod
    def from_bits(cls, bits: str) -> "Point":
        if not bits or set(bits) - {"0", "1"}:
            raise ValueError(f"not a bit string: {bits!r}")
        return cls(len(bits), int(bits[::-1], 2))

    def bit(self, i: int) -> int:
        _check_coord(self.n, i)
        return (self.index >> (i - 1)) & 1

    @property
    def weight(self) -> int:
        return self.index.bit_count()

    def __str__(self) -> str:
        return format(self.index, f"0{self.n}b")[::-1]


def _check_coord(n: int, i: int) -> None:
    if not 1 <= i <= n:
        raise ValueError(f"coordinate {i} out of range 1..{n}")


def flip(x: Point, i: int) -> Point:
    _check_coord(x.n, i)
    return Point(x.n, x.index ^ (1 << (i - 1)))


def precedes(x: Point, y: Point) -> bool:
    """Strict coordinatewise order: x <= y in every coordinate and x != y."""
    if x.n != y.n:
        raise ValueError(f"dimension mismatch: {x.n} vs {y.n}")
    return x.index != y.index and x.index & ~y.index == 0


@dataclass(frozen=True, slots=True)
class Edge:
    """Canonical hypercube edge: ``lower`` has bit ``coord`` clear."""

    lower: Point
    coord: int

    def __post_init__(self):
        _check_coord(self.lower.n, self.coord)
        if self.lower.bit(self.coord):
            raise ValueError(f"lower endpoint {self.lower} has coordinate {self.coord} set")

    @property
    def upper(self) -> Point:
        return flip(self.lower, self.coord)

    @classmethod
    def between(cls, a: Point, b: Point) -> "Edge":
        if a.n != b.n:
            raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
        diff = a.index ^ b.index
        if diff == 0 or diff & (diff - 1):
            raise ValueError(f"{a} and {b} are not adjacent")
        coord = diff.bit_length()
        return cls(Point(a.n, min(a.index, b.index)), coord)

    def __str__(self) -> str:
        return f"({self.lower}, {self.upper})"


class WalkPath:
    """A walk given by its start vertex and the coordinates it flips.

    ``vertex(t)`` is p_t (p_0 is the start); ``edge_at(t)`` is the t-th edge,
    between p_{t-1} and p_t, for t in 1..ell.
    """

    def __init__(self, start: Point, steps):
        steps = tuple(int(i) for i in steps)
        if steps and not (1 <= min(steps) and max(steps) <= start.n):
            raise ValueError(f"walk steps must be coordinates in 1..{start.n}")
        self.start = start
        self.steps = steps

    @property
    def n(self) -> int:
        return self.start.n

    def __len__(self) -> int:
        return len(self.steps)

    def __repr__(self) -> str:
        return f"WalkPath(start={self.start}, steps={self.steps})"

    @cached_property
    def _step_array(self) -> np.ndarray:
        return np.asarray(self.steps, dtype=np.int64)

    def vertex_index(self, t: int) -> int:
        if not 0 <= t <= len(self.steps):
            raise IndexError(f"position {t} outside 0..{len(self.steps)}")
        if t <= _VECTOR_WALK:
            x = self.start.index
            for i in self.steps[:t]:
                x ^= 1 << (i - 1)
            return x
        toggles = np.bincount(self._step_array[:t] - 1, minlength=self.n) & 1
        mask = int.from_bytes(np.packbits(toggles.astype(np.uint8), bitorder="little").tobytes(), "little")
        return self.start.index ^ mask

    def vertex(self, t: int) -> Point:
        return Point(self.n, self.vertex_index(t))

    def vertices(self) -> list[Point]:
        out = [self.start]
        x = self.start.index
        for i in self.steps:
            x ^= 1 << (i - 1)
            out.append(Point(self.n, x))
        return out

    def edge_at(self, t: int) -> Edge:
        return edge_at(self, t)


def edge_at(path: WalkPath, t: int) -> Edge:
    if not 1 <= t <= len(path.steps):
        raise IndexError(f"edge index {t} outside 1..{len(path.steps)}")
    coord = path.steps[t - 1]
    lower = path.vertex_index(t - 1) & ~(1 << (coord - 1))
    return Edge(Point(path.n, lower), coord)


def sample_point(rng: Stream, n: int) -> Point:
    return Point(n, rng.getrandbits(n))


def sample_walk_length(rng: Stream, n: int) -> tuple[int, int]:
    """k uniform on {0, ..., ceil(log2 n)} and the walk length 2**k."""
    k = rng.below(ceil_log2(n) + 1)
    return k, 1 << k


def random_walk(rng: Stream, x: Point, ell: int) -> WalkPath:
    """Non-lazy walk: each step flips a uniformly random coordinate."""
    if ell < 0:
        raise ValueError("walk length must be non-negative")
    if ell > 16:
        steps = (rng.below_array(x.n, ell) + np.uint64(1)).tolist()
    else:
        steps = [rng.below(x.n) + 1 for _ in range(ell)]
    return WalkPath(x, steps)
