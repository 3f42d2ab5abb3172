"""Boolean functions on the hypercube: query handles, truth tables, generators.

A function is anything with an ``n`` attribute and a ``query(index) -> 0|1``
method taking the integer index of a vertex.  Functions defined for n <= 64
may also provide ``query_many(indices)`` over a uint64 array, which the batch
simulator uses.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from functools import partial
from typing import Callable, Union

import numpy as np

from .hypercube import Point
from .rng import GAMMA, Stream, mix64, mix64_array, stream_key

MAX_DENSE_N = 30

# Stream indices reserved for the seeded generators, so a family's seed
# never collides with Monte Carlo trial streams of the same seed.
_BERNOULLI_STREAM = 0xB0_0000_0001
_MONOTONE_STREAM = 0xB0_0000_0002
_BLEND_STREAM = 0xB0_0000_0003


class BooleanFunction:
    """Query handle around a deterministic map from vertex index to bit."""

    def __init__(self, n: int, query: Callable[[int], int],
                 query_many: Callable[[np.ndarray], np.ndarray] | None = None,
                 label: str = ""):
        if n < 1:
            raise ValueError("dimension must be positive")
        self.n = n
        self._query = query
        self._query_many = query_many if n <= 64 else None
        self.label = label

    def query(self, index: int) -> int:
        return self._query(index)

    @property
    def vectorized(self) -> bool:
        return self._query_many is not None

    def query_many(self, indices: np.ndarray) -> np.ndarray:
        if self._query_many is None:
            return np.fromiter((self._query(int(i)) for i in indices), dtype=np.uint8, count=len(indices))
        return self._query_many(np.asarray(indices, dtype=np.uint64))

    def __repr__(self) -> str:
        return f"BooleanFunction(n={self.n}, label={self.label!r})"


class TruthTable:
    """Dense representation: ``bits[index]`` is f at that vertex."""

    def __init__(self, n: int, bits):
        if not 1 <= n <= MAX_DENSE_N:
            raise ValueError(f"dense tables need 1 <= n <= {MAX_DENSE_N}, got {n}")
        arr = np.array(bits, dtype=np.uint8).reshape(-1)
        if arr.size != 1 << n:
            raise ValueError(f"table for n={n} needs {1 << n} entries, got {arr.size}")
        if arr.size and arr.max() > 1:
            raise ValueError("table entries must be 0 or 1")
        arr.flags.writeable = False
        self.n = n
        self.bits = arr
        self.label = ""

    vectorized = True

    def query(self, index: int) -> int:
        return int(self.bits[index])

    def query_many(self, indices: np.ndarray) -> np.ndarray:
        return self.bits[np.asarray(indices, dtype=np.int64)]

    def __eq__(self, other) -> bool:
        return isinstance(other, TruthTable) and self.n == other.n and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash((self.n, self.bits.tobytes()))

    def __repr__(self) -> str:
        body = "".join(map(str, self.bits)) if self.n <= 6 else f"<{self.bits.size} bits>"
        return f"TruthTable(n={self.n}, {body})"

    @classmethod
    def from_string(cls, bits: str) -> "TruthTable":
        n = len(bits).bit_length() - 1
        if len(bits) != 1 << n or set(bits) - {"0", "1"}:
            raise ValueError(f"not a truth table string: {bits!r}")
        return cls(n, [int(c) for c in bits])

    def to_string(self) -> str:
        return self.bits.tobytes().translate(bytes.maketrans(b"\x00\x01", b"01")).decode()


class QueryMeter:
    """Counts queries to ``inner``; caches answers within one run.

    ``total_queries`` counts every query request, ``distinct_queries`` the
    number of distinct points per run (summed over runs).  Call
    :meth:`begin_run` to start a new tester invocation.
    """

    def __init__(self, inner, cache: bool = True):
        self.inner = inner
        self.n = inner.n
        self.cache_enabled = cache
        self.total_queries = 0
        self.distinct_queries = 0
        self.forwarded = 0
        self._cache: dict[int, int] = {}

    def begin_run(self) -> None:
        self._cache.clear()

    def query(self, index: int) -> int:
        self.total_queries += 1
        if self.cache_enabled:
            hit = self._cache.get(index)
            if hit is not None:
                return hit
        value = self.inner.query(index)
        self.forwarded += 1
        self.distinct_queries += 1
        if self.cache_enabled:
            self._cache[index] = value
        return value

    def snapshot(self) -> tuple[int, int]:
        return self.total_queries, self.distinct_queries


def evaluate(f, x: Point) -> int:
    if x.n != f.n:
        raise ValueError(f"dimension mismatch: point has n={x.n}, function has n={f.n}")
    return f.query(x.index)


# --- family specifications -------------------------------------------------

@dataclass(frozen=True)
class Dictator:
    i: int = 1


@dataclass(frozen=True)
class AntiDictator:
    i: int = 1


@dataclass(frozen=True)
class Majority:
    pass


@dataclass(frozen=True)
class Parity:
    pass


@dataclass(frozen=True)
class Threshold:
    t: int


@dataclass(frozen=True)
class RandomBernoulli:
    p: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class RandomMonotone:
    seed: int = 0
    cone_count: int = 4


@dataclass(frozen=True)
class Blended:
    """``base`` XOR the anti-dictator on ``noise_coord``, restricted to a subcube.

    The subcube fixes the coordinates in ``subcube_mask`` (bit i-1 for
    coordinate i) to seeded random values.
    """

    base: "FamilySpec"
    noise_coord: int = 1
    subcube_mask: int = 0
    seed: int = 0


FamilySpec = Union[Dictator, AntiDictator, Majority, Parity, Threshold,
                   RandomBernoulli, RandomMonotone, Blended]

_NAMES = {
    "dictator": Dictator, "antidictator": AntiDictator, "majority": Majority,
    "parity": Parity, "threshold": Threshold, "bernoulli": RandomBernoulli,
    "monotone": RandomMonotone, "blended": Blended,
}
_FIELDS = {
    Dictator: ("i",), AntiDictator: ("i",), Majority: (), Parity: (),
    Threshold: ("t",), RandomBernoulli: ("p", "seed"),
    RandomMonotone: ("seed", "cone_count"),
    Blended: ("base", "noise_coord", "subcube_mask", "seed"),
}


def _split_top(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
            continue
        depth += ch == "("
        depth -= ch == ")"
        if depth < 0:
            raise ValueError("unbalanced parentheses")
        cur.append(ch)
    if depth:
        raise ValueError("unbalanced parentheses")
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def parse_family(text: str) -> FamilySpec:
    """Parse ``name`` or ``name(arg, key=value, ...)``.

    >>> parse_family("threshold(2)")
    Threshold(t=2)
    >>> parse_family("blended(base=majority, noise_coord=2, subcube_mask=5, seed=1)").base
    Majority()
    """
    m = re.fullmatch(r"\s*([A-Za-z_]+)\s*(?:\((.*)\))?\s*", text, re.S)
    if not m or m.group(1).lower() not in _NAMES:
        raise ValueError(f"unknown family {text!r}; expected one of {sorted(_NAMES)}")
    cls = _NAMES[m.group(1).lower()]
    fields = _FIELDS[cls]
    kwargs = {}
    for pos, arg in enumerate(_split_top(m.group(2) or "")):
        key, eq, value = arg.partition("=")
        if not eq or "(" in key:
            key, value = (fields[pos] if pos < len(fields) else None), arg
            if key is None:
                raise ValueError(f"too many arguments for {m.group(1)}")
        key = key.strip()
        if key not in fields:
            raise ValueError(f"{m.group(1)} has no parameter {key!r}")
        value = value.strip()
        if key == "base":
            kwargs[key] = parse_family(value)
        elif key == "p":
            kwargs[key] = float(value)
        else:
            kwargs[key] = int(value, 0)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValueError(f"bad arguments for {m.group(1)}: {exc}") from None


def format_family(spec: FamilySpec) -> str:
    name = {v: k for k, v in _NAMES.items()}[type(spec)]
    fields = _FIELDS[type(spec)]
    if not fields:
        return name
    args = []
    for key in fields:
        value = getattr(spec, key)
        args.append(f"{key}={format_family(value)}" if key == "base" else f"{key}={value!r}")
    return f"{name}({','.join(args)})"


# Module-level evaluators keep instantiated handles picklable for worker pools.

def _dictator(bit, x):
    return (x >> bit) & 1


def _dictator_many(bit, xs):
    return ((xs >> np.uint64(bit)) & np.uint64(1)).astype(np.uint8)


def _antidictator(bit, x):
    return 1 - ((x >> bit) & 1)


def _antidictator_many(bit, xs):
    return (1 - ((xs >> np.uint64(bit)) & np.uint64(1))).astype(np.uint8)


def _weight_at_least(t, x):
    return int(x.bit_count() >= t)


def _weight_at_least_many(t, xs):
    return (np.bitwise_count(xs) >= t).astype(np.uint8)


def _parity(x):
    return x.bit_count() & 1


def _parity_many(xs):
    return (np.bitwise_count(xs) & 1).astype(np.uint8)


def _bernoulli(key, threshold, x):
    return int(mix64(key + (x + 1) * GAMMA) < threshold)


def _bernoulli_many(key, threshold, xs):
    vals = mix64_array(np.uint64(key) + (xs + np.uint64(1)) * np.uint64(GAMMA))
    if threshold > (1 << 64) - 1:
        return np.ones(xs.shape, dtype=np.uint8)
    return (vals < np.uint64(threshold)).astype(np.uint8)


def _cones(apexes, x):
    return int(any(a & x == a for a in apexes))


def _cones_many(apexes, xs):
    out = np.zeros(xs.shape, dtype=bool)
    for a in apexes:
        a = np.uint64(a)
        out |= (xs & a) == a
    return out.astype(np.uint8)


def _blend(base, bit, mask, fixed, x):
    inside = (x & mask) == fixed and not (x >> bit) & 1
    return base.query(x) ^ int(inside)


def _blend_many(base, bit, mask, fixed, xs):
    inside = ((xs & np.uint64(mask)) == np.uint64(fixed)) & (((xs >> np.uint64(bit)) & np.uint64(1)) == 0)
    return base.query_many(xs) ^ inside.astype(np.uint8)


def monotone_apexes(seed: int, n: int, cone_count: int) -> list[int]:
    rng = Stream(seed, _MONOTONE_STREAM)
    return [rng.getrandbits(n) for _ in range(cone_count)]


def instantiate(spec: FamilySpec, n: int) -> BooleanFunction:
    if n < 1:
        raise ValueError("dimension must be positive")
    label = format_family(spec)
    match spec:
        case Dictator(i) | AntiDictator(i):
            if not 1 <= i <= n:
                raise ValueError(f"coordinate {i} out of range 1..{n}")
            if isinstance(spec, Dictator):
                q, qm = _dictator, _dictator_many
            else:
                q, qm = _antidictator, _antidictator_many
            return BooleanFunction(n, partial(q, i - 1), partial(qm, i - 1), label)
        case Majority():
            if n % 2 == 0:
                raise ValueError(f"majority needs odd n, got {n}")
            t = n // 2 + 1
            return BooleanFunction(n, partial(_weight_at_least, t), partial(_weight_at_least_many, t), label)
        case Parity():
            return BooleanFunction(n, _parity, _parity_many, label)
        case Threshold(t):
            if not 0 <= t <= n + 1:
                raise ValueError(f"threshold {t} out of range 0..{n + 1}")
            return BooleanFunction(n, partial(_weight_at_least, t), partial(_weight_at_least_many, t), label)
        case RandomBernoulli(p, seed):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
            if n > 64:
                raise ValueError("bernoulli family supports n <= 64")
            key = stream_key(seed, _BERNOULLI_STREAM)
            threshold = round(p * 2**64)
            return BooleanFunction(n, partial(_bernoulli, key, threshold),
                                   partial(_bernoulli_many, key, threshold), label)
        case RandomMonotone(seed, cone_count):
            if cone_count < 0:
                raise ValueError("cone_count must be non-negative")
            apexes = tuple(monotone_apexes(seed, n, cone_count))
            return BooleanFunction(n, partial(_cones, apexes), partial(_cones_many, apexes), label)
        case Blended(base, noise_coord, mask, seed):
            if not 1 <= noise_coord <= n:
                raise ValueError(f"noise coordinate {noise_coord} out of range 1..{n}")
            if mask < 0 or mask.bit_length() > n:
                raise ValueError(f"subcube mask {mask:#x} has bits outside n={n}")
            bit = noise_coord - 1
            if mask >> bit & 1:
                raise ValueError("noise coordinate must not be fixed by the subcube mask")
            inner = instantiate(base, n)
            fixed = Stream(seed, _BLEND_STREAM).getrandbits(n) & mask
            return BooleanFunction(n, partial(_blend, inner, bit, mask, fixed),
                                   partial(_blend_many, inner, bit, mask, fixed) if inner.vectorized else None,
                                   label)
    raise ValueError(f"not a family spec: {spec!r}")


def to_truth_table(f) -> TruthTable:
    if isinstance(f, TruthTable):
        return f
    if f.n > MAX_DENSE_N:
        raise ValueError(f"dense tables need n <= {MAX_DENSE_N}, got {f.n}")
    size = 1 << f.n
    bits = np.empty(size, dtype=np.uint8)
    chunk = 1 << 20
    for lo in range(0, size, chunk):
        idx = np.arange(lo, min(size, lo + chunk), dtype=np.uint64)
        bits[lo:lo + idx.size] = f.query_many(idx)
    table = TruthTable(f.n, bits)
    table.label = getattr(f, "label", "")
    return table


def save(table: TruthTable, path: str | os.PathLike) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"n={table.n}\n{table.to_string()}\n")


def loads(text: str) -> TruthTable:
    """Parse the two-line text format; a single trailing newline is allowed."""
    if text.endswith("\n"):
        text = text[:-1]
    lines = text.split("\n")
    if len(lines) != 2:
        raise ValueError(f"expected 2 lines, got {len(lines)}")
    m = re.fullmatch(r"n=([1-9][0-9]*)", lines[0])
    if not m:
        raise ValueError(f"bad header {lines[0]!r}; expected 'n=<int>'")
    n = int(m.group(1))
    if n > MAX_DENSE_N:
        raise ValueError(f"n={n} exceeds dense limit {MAX_DENSE_N}")
    body = lines[1]
    if len(body) != 1 << n:
        raise ValueError(f"expected {1 << n} bits for n={n}, got {len(body)}")
    if body.strip("01"):
        raise ValueError("table body may contain only '0' and '1'")
    bits = np.frombuffer(body.encode("ascii"), dtype=np.uint8) - ord("0")
    return TruthTable(n, bits)


def load(path: str | os.PathLike) -> TruthTable:
    with open(path, newline="") as fh:
        return loads(fh.read())


def random_corpus(count: int, n_values, seed: int = 0) -> list[tuple[FamilySpec, int]]:
    """Seeded mix of (spec, n) pairs spanning low and high influence.

    Cycles through sparse and dense Bernoulli functions, random monotone
    functions, and blends of monotone bases with a small anti-dictator patch.
    """
    n_values = list(n_values)
    rng = Stream(seed, 0xC0_4905)
    out: list[tuple[FamilySpec, int]] = []
    for j in range(count):
        n = n_values[rng.below(len(n_values))]
        sub = rng.next64() & 0xFFFFFFFF
        kind = j % 5
        if kind == 0:
            spec: FamilySpec = RandomBernoulli(0.5, sub)
        elif kind == 1:
            spec = RandomBernoulli((1, 2, 5, 10, 20)[rng.below(5)] / 100, sub)
        elif kind == 2:
            spec = RandomMonotone(sub, 1 + rng.below(8))
        else:
            bases = [Dictator(1 + rng.below(n)), Threshold(n // 2 + 1), RandomMonotone(sub, 1 + rng.below(6))]
            coord = 1 + rng.below(n)
            mask = rng.getrandbits(n) & ~(1 << (coord - 1))
            spec = Blended(bases[rng.below(3)], coord, mask, sub)
        out.append((spec, n))
    return out
