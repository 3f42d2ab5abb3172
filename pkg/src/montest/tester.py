"""The adaptive random-walk tester and its companions.

:func:`run_once` is a single invocation: pick a walk length 2**k, walk from a
uniform start, and if the endpoint values differ, bisect the walk for an
influential edge and reject when that edge is a violation.  It never rejects
without a violating edge in hand, so monotone functions are always accepted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .functions import QueryMeter
from .hypercube import Edge, Point, WalkPath, ceil_log2, random_walk, sample_point, sample_walk_length
from .rng import Stream, below_array
from .stats import wilson_interval


class Verdict(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass(frozen=True)
class Outcome:
    verdict: Verdict
    witness: Edge | None = None
    ell: int | None = None
    step: int | None = None       # t of the bisected edge, set whenever the search ran
    queries_total: int = 0
    queries_distinct: int = 0
    repetitions: int = 1
    regime: str = "walk"

    @property
    def rejected(self) -> bool:
        return self.verdict is Verdict.REJECT


def distinct_query_bound(ell: int) -> int:
    """Distinct queries one invocation may use with walk length ``ell``."""
    return 2 + ceil_log2(ell + 1)


def run_query_bound(n: int) -> int:
    """Distinct-query bound over every walk length the tester can pick."""
    return 2 + ceil_log2(n) + 1


def is_violation(f, e: Edge) -> bool:
    return f.query(e.lower.index) == 1 and f.query(e.upper.index) == 0


def binary_search_influential(f, path: WalkPath, endpoint_values: tuple[int, int] | None = None) -> tuple[Edge, int]:
    """Bisect ``path`` for an adjacent pair (p_{t-1}, p_t) with differing values.

    Keeps lo < hi with f(p_lo) != f(p_hi).  At each step the probe is
    mid = (lo + hi) // 2; the search descends left whenever f(p_mid) differs
    from f(p_lo).  Uses at most ceil(log2 ell) queries beyond the endpoints.
    """
    ell = len(path)
    if endpoint_values is None:
        endpoint_values = f.query(path.start.index), f.query(path.vertex_index(ell))
    f_lo, f_hi = endpoint_values
    if ell == 0 or f_lo == f_hi:
        raise ValueError("binary search needs endpoints with different values")
    lo, hi = 0, ell
    while hi - lo > 1:
        mid = (lo + hi) // 2
        f_mid = f.query(path.vertex_index(mid))
        if f_mid != f_lo:
            hi = mid
        else:
            lo = mid
    return path.edge_at(hi), hi


def run_once(f, rng: Stream, ell: int | None = None) -> Outcome:
    """One invocation of the tester.

    ``f`` may be a :class:`QueryMeter`, in which case its counters are
    updated; otherwise a private meter is used.  Passing ``ell`` fixes the
    walk length (the random choice of k is still drawn and discarded, so the
    stream layout does not depend on ``ell``).
    """
    meter = f if isinstance(f, QueryMeter) else QueryMeter(f)
    meter.begin_run()
    total0, distinct0 = meter.snapshot()
    n = meter.n
    _, walk_len = sample_walk_length(rng, n)
    if ell is not None:
        if ell < 0:
            raise ValueError("walk length must be non-negative")
        walk_len = ell
    x = sample_point(rng, n)
    path = random_walk(rng, x, walk_len)
    fx = meter.query(x.index)
    fy = meter.query(path.vertex_index(walk_len))
    witness, step, verdict = None, None, Verdict.ACCEPT
    if fx != fy:
        edge, step = binary_search_influential(meter, path, (fx, fy))
        if is_violation(meter, edge):
            witness, verdict = edge, Verdict.REJECT
    total1, distinct1 = meter.snapshot()
    return Outcome(verdict, witness, walk_len, step, total1 - total0, distinct1 - distinct0)


@dataclass(frozen=True)
class AmplifyConfig:
    epsilon: float
    influence_bound: float
    constant_c: float = 64.0
    max_repetitions: int = 10**6
    repetitions: int | None = None  # set by pilot calibration; overrides the formula

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.influence_bound <= 0:
            raise ValueError("influence_bound must be positive")
        if self.constant_c <= 0 or self.max_repetitions < 1:
            raise ValueError("constant_c and max_repetitions must be positive")
        if self.repetitions is not None and self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")

    def repetitions_for(self, n: int) -> int:
        if self.repetitions is not None:
            return min(self.repetitions, self.max_repetitions)
        log_n = math.log2(max(n, 2))
        r = math.ceil(self.constant_c * self.influence_bound * log_n**9 / self.epsilon**4)
        return max(1, min(r, self.max_repetitions))


def run_amplified(f, config: AmplifyConfig, rng: Stream) -> Outcome:
    """Repeat :func:`run_once` until a violation is found or R runs accept."""
    meter = f if isinstance(f, QueryMeter) else QueryMeter(f)
    total0, distinct0 = meter.snapshot()
    reps = config.repetitions_for(meter.n)
    for j in range(reps):
        out = run_once(meter, rng.child(j))
        if out.rejected:
            total1, distinct1 = meter.snapshot()
            return Outcome(Verdict.REJECT, out.witness, out.ell, out.step,
                           total1 - total0, distinct1 - distinct0, repetitions=j + 1)
    total1, distinct1 = meter.snapshot()
    return Outcome(Verdict.ACCEPT, queries_total=total1 - total0,
                   queries_distinct=distinct1 - distinct0, repetitions=reps)


def calibrate_repetitions(f, pilot_trials: int = 20_000, seed: int = 0, factor: float = 5.0,
                          max_repetitions: int = 10**6) -> int:
    """R = ceil(factor / p) from a pilot estimate p of the per-run rejection rate.

    With R = 5/p the chance that R independent runs all accept is about
    exp(-5) < 0.01.  A pilot with no rejections returns ``max_repetitions``.
    """
    from .batch import supports_batch, simulate

    if supports_batch(f):
        rejections = int(simulate(f, seed, np.arange(pilot_trials)).rejected.sum())
    else:
        rejections = sum(run_once(f, Stream(seed, i)).rejected for i in range(pilot_trials))
    if rejections == 0:
        return max_repetitions
    return max(1, min(max_repetitions, math.ceil(factor * pilot_trials / rejections)))


def _sample_edge(rng: Stream, n: int) -> tuple[int, int]:
    bit = 1 << rng.below(n)
    return rng.getrandbits(n) & ~bit, bit


def edge_sampler(f, rng: Stream, trials: int) -> Outcome:
    """Check ``trials`` uniform random edges; reject on the first violation."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    meter = f if isinstance(f, QueryMeter) else QueryMeter(f)
    total0, distinct0 = meter.snapshot()
    n = meter.n
    for j in range(trials):
        meter.begin_run()
        lower, bit = _sample_edge(rng, n)
        edge = Edge(Point(n, lower), bit.bit_length())
        if is_violation(meter, edge):
            total1, distinct1 = meter.snapshot()
            return Outcome(Verdict.REJECT, edge, 1, j + 1, total1 - total0, distinct1 - distinct0,
                           repetitions=j + 1, regime="edges")
    total1, distinct1 = meter.snapshot()
    return Outcome(Verdict.ACCEPT, None, None, None, total1 - total0, distinct1 - distinct0,
                   repetitions=trials, regime="edges")


@dataclass(frozen=True)
class InfluenceEstimate:
    value: float
    low: float
    high: float
    samples: int
    influential: int


def estimate_influence(f, rng: Stream, samples: int) -> InfluenceEstimate:
    """n times the fraction of sampled uniform edges that are influential."""
    if samples < 1:
        raise ValueError("samples must be at least 1")
    n = f.n
    if n <= 64 and getattr(f, "vectorized", False):
        bits = np.left_shift(np.uint64(1), below_array(rng.next64_array(samples), n))
        mask = np.uint64((1 << n) - 1)
        lower = rng.next64_array(samples) & mask & ~bits
        hits = int(np.count_nonzero(f.query_many(lower) != f.query_many(lower | bits)))
    else:
        hits = 0
        for _ in range(samples):
            lower, bit = _sample_edge(rng, n)
            hits += f.query(lower) != f.query(lower | bit)
    low, high = wilson_interval(hits, samples)
    return InfluenceEstimate(n * hits / samples, n * low, n * high, samples, hits)


def check_monotonicity(f, epsilon: float, rng: Stream, influence_bound: float | None = None,
                      constant_c: float = 64.0, max_repetitions: int = 10**6,
                      repetitions: int | None = None, influence_samples: int | None = None,
                      regime_factor: float = 6.0, edge_constant: float = 64.0) -> Outcome:
    """Full tester with the high-influence dispatch.

    Estimates the total influence from O(n) edge samples.  Above
    ``regime_factor * sqrt(n)`` it samples ``edge_constant * n / I`` edges
    directly; otherwise it runs the amplified walk tester with
    ``influence_bound`` (default: the estimate's upper confidence limit).
    """
    n = f.n
    samples = influence_samples or max(1000, 32 * n)
    est = estimate_influence(f, rng.child(0), samples)
    if est.value > regime_factor * math.sqrt(n):
        trials = max(1, math.ceil(edge_constant * n / est.value))
        return edge_sampler(f, rng.child(1), trials)
    bound = influence_bound if influence_bound is not None else max(est.high, 1.0 / n)
    config = AmplifyConfig(epsilon, bound, constant_c, max_repetitions, repetitions)
    return run_amplified(f, config, rng.child(2))

