"""Exact ground truth for small dimensions.

Everything here works on dense truth tables by full enumeration or dynamic
programming; nothing is sampled except :func:`violating_influential_ratio`
on functions too large to tabulate.

Minimum-cut orientation used by :func:`distance_to_monotonicity`: the source
side of the cut is where the closest monotone function equals 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, maximum_flow

from .functions import TruthTable, to_truth_table
from .hypercube import Edge, Point, ceil_log2
from .rng import Stream, below_array
from .stats import wilson_interval

log = logging.getLogger(__name__)

STICKY_TOL = 1e-12
BOUNDARY_TOL = 1e-9
MAX_SURVIVAL_N = 20
MAX_CUT_N = 16
MAX_EXHAUSTIVE_N = 4
MAX_EXHAUSTIVE_ELL = 4
MAX_EXACT_RATIO_N = 24

_RATIO_STREAM = 0xC0_0000_0001


def _halves(bits: np.ndarray, n: int, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Values at the lower and upper endpoints of all edges along bit ``i``.

    Works on any leading batch shape: ``bits`` is ``(..., 2**n)``.
    """
    v = bits.reshape(bits.shape[:-1] + (1 << (n - 1 - i), 2, 1 << i))
    return v[..., 0, :], v[..., 1, :]


def _swap_along(x: np.ndarray, n: int, i: int) -> np.ndarray:
    """x[index ^ (1 << i)] for every index, via reshaping."""
    v = x.reshape(x.shape[:-1] + (1 << (n - 1 - i), 2, 1 << i))
    return v[..., ::-1, :].reshape(x.shape)


def edge_counts(bits: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Influential and violating edge counts for a batch of tables."""
    bits = np.asarray(bits, dtype=np.uint8)
    infl = np.zeros(bits.shape[:-1], dtype=np.int64)
    viol = np.zeros(bits.shape[:-1], dtype=np.int64)
    for i in range(n):
        lo, hi = _halves(bits, n, i)
        infl += (lo != hi).sum(axis=(-2, -1))
        viol += (lo > hi).sum(axis=(-2, -1))
    return infl, viol


@dataclass(frozen=True)
class InfluenceReport:
    n: int
    influential_count: int
    violating_count: int

    @property
    def total_influence(self) -> Fraction:
        return Fraction(self.influential_count, 1 << (self.n - 1))


def influence_report(f) -> InfluenceReport:
    table = to_truth_table(f)
    infl, viol = edge_counts(table.bits, table.n)
    return InfluenceReport(table.n, int(infl), int(viol))


def total_influence_from_pairs(f) -> Fraction:
    """n * Pr[f(x) != f(y)] over uniform ordered pairs at Hamming distance 1.

    Counts ordered pairs directly, independently of the canonical-edge
    enumeration used by :func:`influence_report`.
    """
    table = to_truth_table(f)
    idx = np.arange(1 << table.n)
    differing = sum(int(np.count_nonzero(table.bits != table.bits[idx ^ (1 << i)])) for i in range(table.n))
    # n * differing / (n * 2**n)
    return Fraction(differing, 1 << table.n)


def is_monotone(f) -> bool:
    return influence_report(f).violating_count == 0


# --- survival probabilities and sticky vertices ----------------------------

@dataclass(frozen=True)
class StickyTable:
    """``s[ell, x]``: probability an ell-step walk from x crosses no influential edge."""

    n: int
    ell_max: int
    s: np.ndarray = field(repr=False)

    def survival(self, ell: int, x: int) -> float:
        return float(self.s[ell, x])

    def sticky_mask(self, ell: int, tol: float = STICKY_TOL) -> np.ndarray:
        return self.s[ell] >= 0.5 - tol


def survival_table(f, ell_max: int) -> StickyTable:
    table = to_truth_table(f)
    n = table.n
    if n > MAX_SURVIVAL_N:
        raise ValueError(f"survival tables need n <= {MAX_SURVIVAL_N}, got {n}")
    if ell_max < 1:
        raise ValueError("ell_max must be at least 1")
    bits = table.bits
    size = 1 << n
    # open_edge[i][x]: the edge from x along bit i is not influential
    open_edge = [(bits == _swap_along(bits, n, i)).astype(np.float64) for i in range(n)]
    s = np.empty((ell_max + 1, size))
    s[0] = 1.0
    for ell in range(1, ell_max + 1):
        acc = np.zeros(size)
        for i in range(n):
            acc += open_edge[i] * _swap_along(s[ell - 1], n, i)
        s[ell] = acc / n
    s.flags.writeable = False
    return StickyTable(n, ell_max, s)


@dataclass(frozen=True)
class FEllSet:
    """Sticky vertices at walk length ``ell`` and the violating edges between them.

    ``edges`` holds canonical ``(lower index, coordinate)`` pairs.
    """

    n: int
    ell: int
    sticky: np.ndarray = field(repr=False)
    edges: tuple[tuple[int, int], ...] = field(repr=False)
    boundary: np.ndarray = field(repr=False)

    @property
    def sticky_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.sticky)

    @property
    def nonsticky_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.sticky)

    def edge_objects(self) -> list[Edge]:
        return [Edge(Point(self.n, u), c) for u, c in self.edges]

    def __len__(self) -> int:
        return len(self.edges)


def violating_edges(f) -> list[tuple[int, int]]:
    table = to_truth_table(f)
    n = table.n
    idx = np.arange(1 << n)
    out = []
    for i in range(n):
        lo, hi = _halves(table.bits, n, i)
        lower_idx, _ = _halves(idx, n, i)
        out.extend((int(u), i + 1) for u in lower_idx[lo > hi])
    return sorted(out)


def sticky_set(f, ell: int, table: StickyTable | None = None) -> FEllSet:
    tt = to_truth_table(f)
    if table is None:
        table = survival_table(tt, ell)
    if ell > table.ell_max:
        raise ValueError(f"survival table only reaches ell={table.ell_max}")
    sticky = table.sticky_mask(ell)
    boundary = np.flatnonzero(np.abs(table.s[ell] - 0.5) < BOUNDARY_TOL)
    if boundary.size:
        log.debug("ell=%d: %d vertices within %g of the sticky threshold", ell, boundary.size, BOUNDARY_TOL)
    edges = tuple((u, c) for u, c in violating_edges(tt)
                  if sticky[u] and sticky[u | (1 << (c - 1))])
    return FEllSet(tt.n, ell, sticky, edges, boundary)


def event_probability_sum(f, ell: int, table: StickyTable | None = None) -> float:
    """Sum over sticky violating edges (u, v) and steps t of
    (2 / (n 2**n)) * s[t-1][u] * s[ell-t][v].

    This is the exact probability that the walk crosses exactly one
    influential edge and that edge lies in F_ell.
    """
    tt = to_truth_table(f)
    if table is None:
        table = survival_table(tt, ell)
    if ell < 1:
        raise ValueError("ell must be at least 1")
    fset = sticky_set(tt, ell, table)
    if not fset.edges:
        return 0.0
    u = np.array([e[0] for e in fset.edges])
    v = u | (1 << (np.array([e[1] for e in fset.edges]) - 1))
    before = table.s[0:ell][:, u]            # s[t-1][u], t = 1..ell
    after = table.s[ell - 1::-1][:, v]       # s[ell-t][v]
    total = float(np.sum(before * after))
    return 2.0 * total / (tt.n * (1 << tt.n))


# --- exhaustive enumeration of tester invocations --------------------------

@lru_cache(maxsize=32)
def enumerate_walks(n: int, ell: int) -> tuple[np.ndarray, np.ndarray]:
    """All 2**n * n**ell (start, steps) pairs as a vertex matrix.

    Returns ``(paths, coords)``: ``paths[m]`` is p_0..p_ell and ``coords[m]``
    the 0-based bit flipped at each step.  Rows are start-major.
    """
    steps = np.array(list(product(range(n), repeat=ell)), dtype=np.int64).reshape(n ** ell, ell)
    starts = np.arange(1 << n, dtype=np.int64)
    toggles = np.left_shift(1, steps)
    offsets = np.zeros((steps.shape[0], ell + 1), dtype=np.int64)
    if ell:
        offsets[:, 1:] = np.bitwise_xor.accumulate(toggles, axis=1)
    paths = starts[:, None, None] ^ offsets[None, :, :]
    coords = np.broadcast_to(steps, (starts.size,) + steps.shape)
    paths = paths.reshape(-1, ell + 1)
    coords = coords.reshape(paths.shape[0], ell)
    paths.flags.writeable = False
    return paths, np.ascontiguousarray(coords)


def _bisection_points(vals: np.ndarray, ell: int) -> np.ndarray:
    """Index t found by the bisection on value vectors ``vals[..., 0..ell]``.

    Walks the fixed decision tree of intervals: each node (lo, hi) probes
    mid = (lo + hi) // 2 and sends an element left when vals[mid] differs
    from vals[lo].  Elements whose endpoint values agree get t = 0.
    """
    t = np.zeros(vals.shape[:-1], dtype=np.int64)

    def visit(lo, hi, mask):
        if not mask.any():
            return
        if hi - lo == 1:
            t[mask] = hi
            return
        mid = (lo + hi) // 2
        left = mask & (vals[..., mid] != vals[..., lo])
        visit(lo, mid, left)
        visit(mid, hi, mask & ~left)

    if ell > 0:
        visit(0, ell, vals[..., 0] != vals[..., ell])
    return t


def exhaustive_rejection_counts(tables: np.ndarray, n: int, ell: int, chunk: int = 256) -> np.ndarray:
    """Number of (start, steps) pairs on which one invocation rejects, per table."""
    tables = np.asarray(tables, dtype=np.uint8).reshape(-1, 1 << n)
    paths, _ = enumerate_walks(n, ell)
    out = np.zeros(tables.shape[0], dtype=np.int64)
    if ell == 0:
        return out
    for lo in range(0, tables.shape[0], chunk):
        vals = tables[lo:lo + chunk][:, paths]          # (F, M, ell+1)
        t = _bisection_points(vals, ell)
        found = t > 0
        tt = np.maximum(t, 1)
        rows = np.arange(paths.shape[0])[None, :]
        a = paths[rows, tt - 1]
        b = paths[rows, tt]
        lower_val = np.where(a < b,
                             np.take_along_axis(vals, (tt - 1)[..., None], -1)[..., 0],
                             np.take_along_axis(vals, tt[..., None], -1)[..., 0])
        out[lo:lo + chunk] = np.count_nonzero(found & (lower_val == 1), axis=1)
    return out


def _check_exhaustive(n: int, ell: int) -> None:
    if ell < 0:
        raise ValueError("walk length must be non-negative")
    if n > MAX_EXHAUSTIVE_N or ell > MAX_EXHAUSTIVE_ELL:
        raise ValueError(f"exhaustive enumeration needs n <= {MAX_EXHAUSTIVE_N} "
                         f"and ell <= {MAX_EXHAUSTIVE_ELL}, got n={n}, ell={ell}")


def exhaustive_rejection_probability(f, ell: int) -> Fraction:
    table = to_truth_table(f)
    _check_exhaustive(table.n, ell)
    count = int(exhaustive_rejection_counts(table.bits, table.n, ell)[0])
    return Fraction(count, (1 << table.n) * table.n ** ell)


def endpoint_difference_probability(f, ell: int) -> Fraction:
    """Pr[f(p_0) != f(p_ell)] by enumeration."""
    table = to_truth_table(f)
    _check_exhaustive(table.n, ell)
    paths, _ = enumerate_walks(table.n, ell)
    vals = table.bits[paths]
    return Fraction(int(np.count_nonzero(vals[:, 0] != vals[:, -1])), paths.shape[0])


def unique_influential_counts(f, ell: int) -> dict[tuple[int, int, int], int]:
    """Walks whose only influential edge is crossed at step t from a to b.

    Keys are ``(t, a, b)`` with a = p_{t-1} and b = p_t; values count
    (start, steps) pairs out of 2**n * n**ell.
    """
    table = to_truth_table(f)
    _check_exhaustive(table.n, ell)
    paths, _ = enumerate_walks(table.n, ell)
    vals = table.bits[paths]
    infl = vals[:, 1:] != vals[:, :-1]
    single = np.flatnonzero(infl.sum(axis=1) == 1)
    t = np.argmax(infl[single], axis=1)
    a = paths[single, t]
    b = paths[single, t + 1]
    keys, counts = np.unique(np.stack([t + 1, a, b], axis=1), axis=0, return_counts=True)
    return {tuple(int(v) for v in k): int(c) for k, c in zip(keys, counts)}


# --- distance to monotonicity ----------------------------------------------

@dataclass(frozen=True)
class DistanceReport:
    n: int
    flips: int
    witness: TruthTable

    @property
    def distance(self) -> Fraction:
        return Fraction(self.flips, 1 << self.n)


def distance_to_monotonicity(f) -> DistanceReport:
    """Closest monotone function by minimum s-t cut.

    Source -> x (capacity 1) when f(x) = 1, x -> sink (capacity 1) when
    f(x) = 0, and an uncuttable arc lower -> upper along every hypercube edge.
    The source side of a minimum cut is an up-set; it is the witness's
    1-set, and the cut value is the number of changed points.
    """
    table = to_truth_table(f)
    n = table.n
    if n > MAX_CUT_N:
        raise ValueError(f"min-cut distance needs n <= {MAX_CUT_N}, got {n}")
    size = 1 << n
    source, sink = size, size + 1
    idx = np.arange(size)
    ones = np.flatnonzero(table.bits == 1)
    zeros = np.flatnonzero(table.bits == 0)
    lowers = [_halves(idx, n, i)[0].ravel() for i in range(n)]
    rows = np.concatenate([np.full(ones.size, source), zeros] + lowers)
    cols = np.concatenate([ones, np.full(zeros.size, sink)] + [u | (1 << i) for i, u in enumerate(lowers)])
    infinite = size + 1  # exceeds every finite cut
    caps = np.concatenate([np.ones(size, dtype=np.int32),
                           np.full(n * (size // 2), infinite, dtype=np.int32)])
    graph = csr_matrix((caps, (rows, cols)), shape=(size + 2, size + 2), dtype=np.int32)
    result = maximum_flow(graph, source, sink, method="dinic")
    residual = (graph - result.flow).tocsr()
    residual.data = (residual.data > 0).astype(np.int8)
    residual.eliminate_zeros()
    reached = breadth_first_order(residual, source, directed=True, return_predecessors=False)
    witness = np.zeros(size, dtype=np.uint8)
    witness[reached[reached < size]] = 1
    return DistanceReport(n, int(result.flow_value), TruthTable(n, witness))


@lru_cache(maxsize=8)
def all_truth_tables(n: int) -> np.ndarray:
    """Every function on n <= 4 variables; row j has bits[x] = (j >> x) & 1."""
    if n > 4:
        raise ValueError("full enumeration needs n <= 4")
    size = 1 << n
    j = np.arange(1 << size, dtype=np.int64)
    tables = ((j[:, None] >> np.arange(size)[None, :]) & 1).astype(np.uint8)
    tables.flags.writeable = False
    return tables


@lru_cache(maxsize=8)
def monotone_function_codes(n: int) -> np.ndarray:
    """Integer codes j of all monotone functions (6, 20, 168 for n = 2, 3, 4)."""
    tables = all_truth_tables(n)
    _, viol = edge_counts(tables, n)
    return np.flatnonzero(viol == 0)


def distance_bruteforce_all(n: int) -> np.ndarray:
    """Minimum flips to monotone for every function code, by enumeration."""
    codes = np.arange(1 << (1 << n), dtype=np.uint64)
    mono = monotone_function_codes(n).astype(np.uint64)
    best = np.full(codes.size, 1 << n, dtype=np.int64)
    for m in mono:
        np.minimum(best, np.bitwise_count(codes ^ m).astype(np.int64), out=best)
    return best


def distance_bruteforce(f) -> int:
    table = to_truth_table(f)
    if table.n > 4:
        raise ValueError("brute-force distance needs n <= 4")
    code = int(np.dot(table.bits.astype(np.int64), 1 << np.arange(1 << table.n)))
    mono = monotone_function_codes(table.n)
    return int(min(bin(code ^ int(m)).count("1") for m in mono))


# --- violating / influential ratio -----------------------------------------

@dataclass(frozen=True)
class RatioReport:
    value: Fraction | float
    influential: int
    violating: int
    exact: bool
    degenerate: bool
    samples: int | None = None
    interval: tuple[float, float] | None = None


def violating_influential_ratio(f, samples: int = 10**6, seed: int = 0) -> RatioReport:
    """violating / influential edges; exact when tabulable, else sampled.

    Degenerate functions (no influential edges) report 0 with ``degenerate``
    set.  The sampled interval is a 95% Wilson interval on the violating
    fraction among sampled influential edges.
    """
    if isinstance(f, TruthTable) or f.n <= MAX_EXACT_RATIO_N:
        rep = influence_report(f)
        if rep.influential_count == 0:
            return RatioReport(Fraction(0), 0, 0, exact=True, degenerate=True)
        return RatioReport(Fraction(rep.violating_count, rep.influential_count),
                           rep.influential_count, rep.violating_count, exact=True, degenerate=False)
    infl, viol = sample_edges(f, samples, seed)
    if infl == 0:
        return RatioReport(0.0, 0, 0, exact=False, degenerate=True, samples=samples)
    return RatioReport(viol / infl, infl, viol, exact=False, degenerate=False,
                       samples=samples, interval=wilson_interval(viol, infl))


def sample_edges(f, samples: int, seed: int = 0) -> tuple[int, int]:
    """Influential and violating counts among uniformly sampled edges."""
    n = f.n
    rng = Stream(seed, _RATIO_STREAM)
    if n <= 64 and getattr(f, "vectorized", False):
        infl = viol = 0
        chunk = 1 << 18
        mask = np.uint64((1 << n) - 1)
        for lo in range(0, samples, chunk):
            m = min(chunk, samples - lo)
            bit = np.left_shift(np.uint64(1), below_array(rng.next64_array(m), n))
            lower = rng.next64_array(m) & mask & ~bit
            a = f.query_many(lower)
            b = f.query_many(lower | bit)
            infl += int(np.count_nonzero(a != b))
            viol += int(np.count_nonzero(a > b))
        return infl, viol
    infl = viol = 0
    for _ in range(samples):
        bit = 1 << rng.below(n)
        lower = rng.getrandbits(n) & ~bit
        a, b = f.query(lower), f.query(lower | bit)
        infl += a != b
        viol += a > b
    return infl, viol


# --- one-record analysis ---------------------------------------------------

@dataclass(frozen=True)
class AnalysisReport:
    n: int
    family: str
    influential_count: int
    violating_count: int
    total_influence: Fraction
    distance: Fraction | None
    f_ell_sizes: dict[int, int] | None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "family": self.family,
            "influential_count": self.influential_count,
            "violating_count": self.violating_count,
            "total_influence": str(self.total_influence),
            "distance": None if self.distance is None else str(self.distance),
            "f_ell_sizes": None if self.f_ell_sizes is None else {str(k): v for k, v in self.f_ell_sizes.items()},
        }

    def csv_row(self) -> dict:
        row = {k: v for k, v in self.to_dict().items() if k != "f_ell_sizes"}
        row = {k: "" if v is None else v for k, v in row.items()}
        for ell, size in (self.f_ell_sizes or {}).items():
            row[f"F_{ell}"] = size
        return row


def walk_lengths(n: int) -> list[int]:
    return [1 << k for k in range(ceil_log2(n) + 1)]


def analyze(f, family: str | None = None) -> AnalysisReport:
    table = to_truth_table(f)
    rep = influence_report(table)
    distance = distance_to_monotonicity(table).distance if table.n <= MAX_CUT_N else None
    sizes = None
    if table.n <= MAX_SURVIVAL_N:
        lengths = walk_lengths(table.n)
        st = survival_table(table, lengths[-1])
        sizes = {ell: len(sticky_set(table, ell, st)) for ell in lengths}
    label = family if family is not None else getattr(f, "label", "")
    return AnalysisReport(table.n, label, rep.influential_count, rep.violating_count,
                          rep.total_influence, distance, sizes)
