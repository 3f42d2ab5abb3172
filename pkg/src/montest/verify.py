"""Invariant suite behind ``montest verify``.

Every invariant has an identifier; :data:`REQUIRED` lists the identifiers
the suite must cover, and a missing one fails the run.  Two levels:

* quick: exhaustive checks at n <= 4 on sampled corpora, 10^5-trial Monte Carlo
* full: all 65536 functions at n = 4, oracle sweeps to n = 12, 10^6 trials
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.stats import chisquare, norm

from . import oracles
from .batch import simulate
from .functions import (AntiDictator, Dictator, Majority, Parity, QueryMeter, RandomBernoulli,
                        RandomMonotone, Threshold, TruthTable, instantiate, random_corpus,
                        to_truth_table)
from .harness import CSV_HEADER, ExperimentConfig, lemma_bound_holds, mc_estimate, rows_to_csv, run_sweep
from .hypercube import WalkPath, ceil_log2, edge_at, random_walk, sample_point
from .rng import Stream, below_array
from .tester import (AmplifyConfig, binary_search_influential, distinct_query_bound,
                     run_amplified, run_once)


class CheckFailed(AssertionError):
    pass


def require(cond: bool, message: str) -> None:
    if not cond:
        raise CheckFailed(message)


@dataclass(frozen=True)
class Scale:
    mc_trials: int
    n4_functions: int | None      # None: all 65536
    corpus_size: int
    corpus_n: tuple[int, ...]
    witness_n: tuple[int, ...]
    walk_samples: int


SCALES = {
    "quick": Scale(10**5, 2048, 40, tuple(range(4, 9)), (8, 10), 10**5),
    "full": Scale(10**6, None, 200, tuple(range(4, 13)), tuple(range(8, 15)), 10**6),
}


@dataclass
class Context:
    level: str
    seed: int
    lazy: bool

    @property
    def scale(self) -> Scale:
        return SCALES[self.level]

    def n4_tables(self) -> np.ndarray:
        tables = oracles.all_truth_tables(4)
        if self.scale.n4_functions is None:
            return tables
        pick = below_array(Stream(self.seed, 4).next64_array(self.scale.n4_functions), tables.shape[0])
        return tables[pick.astype(np.int64)]

    def corpus(self) -> list[TruthTable]:
        specs = random_corpus(self.scale.corpus_size, self.scale.corpus_n, self.seed)
        return [to_truth_table(instantiate(s, n)) for s, n in specs]


@dataclass(frozen=True)
class CheckResult:
    id: str
    passed: bool
    detail: str
    seconds: float

    def to_dict(self) -> dict:
        return {"id": self.id, "passed": self.passed, "detail": self.detail, "seconds": round(self.seconds, 3)}


_CHECKS: dict[str, tuple[str, Callable[[Context], str]]] = {}


def check(ident: str, title: str):
    def register(fn):
        _CHECKS[ident] = (title, fn)
        return fn
    return register


def _walk_lengths(n: int) -> list[int]:
    return [1 << k for k in range(ceil_log2(n) + 1)]


# --- hypercube core --------------------------------------------------------

@check("HC-CANONICAL", "edge_at ignores traversal direction")
def _canonical(ctx: Context) -> str:
    rng = Stream(ctx.seed, 1)
    for _ in range(2000):
        n = 1 + rng.below(10)
        path = random_walk(rng, sample_point(rng, n), 1 + rng.below(8))
        for t in range(1, len(path) + 1):
            e = edge_at(path, t)
            back = WalkPath(path.vertex(t), [path.steps[t - 1]])
            require(e == edge_at(back, 1), f"direction changed the edge: {path}, t={t}")
            require({e.lower, e.upper} == {path.vertex(t - 1), path.vertex(t)}, "edge endpoints wrong")
    return "2000 random paths"


@check("HC-STATIONARY", "walk position p_t is uniform from a uniform start")
def _stationary(ctx: Context) -> str:
    worst = 1.0
    for n in (2, 3, 4):
        rng = Stream(ctx.seed, 100 + n)
        m = ctx.scale.walk_samples
        x = rng.next64_array(m) & np.uint64((1 << n) - 1)
        for t in range(1, 5):
            x ^= np.left_shift(np.uint64(1), rng.below_array(n, m))
            p = chisquare(np.bincount(x.astype(np.int64), minlength=1 << n)).pvalue
            worst = min(worst, p)
            require(p > 1e-4, f"n={n}, t={t}: chi-squared p={p:.2e}")
    return f"min p-value {worst:.3g}"


@check("HC-UNIFORM-EDGE", "e_t is a uniform edge (exact enumeration)")
def _uniform_edge(ctx: Context) -> str:
    for n in (1, 2, 3):
        for ell in (1, 2, 3):
            paths, coords = oracles.enumerate_walks(n, ell)
            for t in range(ell):
                lower = np.minimum(paths[:, t], paths[:, t + 1])
                key = lower * n + coords[:, t]
                counts = np.unique(key, return_counts=True)[1]
                require(counts.size == n << (n - 1), f"n={n} ell={ell}: not every edge reached")
                require(np.all(counts == 2 * n ** (ell - 1)), f"n={n} ell={ell} t={t + 1}: counts {set(counts)}")
    return "n<=3, ell<=3"


@check("HC-REPRODUCIBLE", "identical seeds give identical walks")
def _reproducible(ctx: Context) -> str:
    for i in range(200):
        a, b = Stream(ctx.seed, i), Stream(ctx.seed, i)
        pa = random_walk(a, sample_point(a, 20), 40)
        pb = random_walk(b, sample_point(b, 20), 40)
        require(pa.start == pb.start and pa.steps == pb.steps, f"stream {i} diverged")
    return "200 streams"


# --- function model --------------------------------------------------------

@check("FM-METER", "query meter counts equal reported counts")
def _meter(ctx: Context) -> str:
    f = instantiate(RandomBernoulli(0.5, ctx.seed & 0xFFFF), 10)
    meter = QueryMeter(f)
    total = distinct = 0
    for i in range(2000):
        out = run_once(meter, Stream(ctx.seed, i))
        total += out.queries_total
        distinct += out.queries_distinct
    require(meter.total_queries == total and meter.distinct_queries == distinct, "run_once counts drifted")
    require(meter.forwarded == meter.distinct_queries, "cache forwarded repeated points")
    meter2 = QueryMeter(f)
    out = run_amplified(meter2, AmplifyConfig(0.5, 1.0, repetitions=50), Stream(ctx.seed, 9))
    require(out.queries_total == meter2.total_queries, "amplified total mismatch")
    return f"{total} queries over 2000 runs"


@check("FM-DETERMINISM", "generators are deterministic")
def _determinism(ctx: Context) -> str:
    specs = random_corpus(30, range(3, 11), ctx.seed) + [(Dictator(2), 5), (Majority(), 7), (Parity(), 6)]
    for spec, n in specs:
        require(to_truth_table(instantiate(spec, n)) == to_truth_table(instantiate(spec, n)), f"{spec} at n={n}")
    return f"{len(specs)} specs"


@check("FM-MONOTONE-GENERATOR", "RandomMonotone has no violating edge")
def _monotone_gen(ctx: Context) -> str:
    top = 12 if ctx.level == "full" else 9
    count = 0
    for n in range(1, top + 1):
        for seed in range(10):
            f = instantiate(RandomMonotone(ctx.seed + seed, 1 + seed % 6), n)
            require(oracles.influence_report(f).violating_count == 0, f"n={n} seed={seed}")
            count += 1
    return f"{count} functions, n<={top}"


# --- exact oracles ---------------------------------------------------------

@check("OR-EDGE-COUNT", "influential edges = I(f) * 2^(n-1)")
def _edge_count(ctx: Context) -> str:
    tables = ctx.n4_tables()
    infl, _ = oracles.edge_counts(tables, 4)
    idx = np.arange(16)
    pairs = sum((tables != tables[:, idx ^ (1 << i)]).sum(axis=1) for i in range(4))
    # I(f) = pairs / 2^n from ordered pairs; influential * 2 == I * 2^n
    require(np.array_equal(infl * 2, pairs), "n=4 identity failed")
    for t in ctx.corpus():
        rep = oracles.influence_report(t)
        require(rep.influential_count * 2 == oracles.total_influence_from_pairs(t) * (1 << t.n),
                f"identity failed at n={t.n}")
    return f"{len(tables)} functions at n=4 plus corpus"


def _sticky_corpus(ctx: Context):
    for t in ctx.corpus():
        lengths = _walk_lengths(t.n)
        st = oracles.survival_table(t, lengths[-1])
        yield t, lengths, st


@check("OR-LEMMA-SIMPLE", "non-sticky fraction <= 2 ell I(f) / n")
def _lemma_simple(ctx: Context) -> str:
    cells = 0
    for t, lengths, st in _sticky_corpus(ctx):
        rep = oracles.influence_report(t)
        for ell in lengths:
            nonsticky = int(np.count_nonzero(~st.sticky_mask(ell)))
            lhs = Fraction(nonsticky, 1 << t.n)
            rhs = Fraction(2 * ell, t.n) * rep.total_influence
            require(lhs <= rhs, f"n={t.n} ell={ell}: {lhs} > {rhs}")
            cells += 1
    return f"{cells} (function, ell) cells"


@check("OR-STICKY-NESTING", "ell-sticky implies (ell/2)-sticky")
def _nesting(ctx: Context) -> str:
    cells = 0
    for t, lengths, st in _sticky_corpus(ctx):
        for ell in range(2, lengths[-1] + 1):
            wide, narrow = st.sticky_mask(ell), st.sticky_mask(ell - 1)
            require(not np.any(wide & ~narrow), f"n={t.n}: sticky set grew from {ell - 1} to {ell}")
            require(np.all(st.s[ell] <= st.s[ell - 1] + 1e-15), f"n={t.n}: survival increased at {ell}")
            cells += 1
    return f"{cells} consecutive pairs"


def claim_deviation(table: TruthTable, ell: int) -> tuple[float, float]:
    """Largest errors of the survival-product formulas against enumeration.

    First value: per step and per traversal direction,
    Pr[unique influential edge crossed a -> b at step t] vs
    s[t-1][a] s[ell-t][b] / (n 2^n).  Second value: summed over t and both
    directions vs sum_t (2 / (n 2^n)) s[t-1][u] s[ell-t][v].
    """
    n = table.n
    st = oracles.survival_table(table, ell)
    counts = oracles.unique_influential_counts(table, ell)
    total = (1 << n) * n ** ell
    unit = 1.0 / (n * (1 << n))
    per_step = summed = 0.0
    for u in range(1 << n):
        for i in range(n):
            v = u | (1 << i)
            if v == u or table.bits[u] == table.bits[v]:
                continue
            emp_sum = pred_sum = 0.0
            for t in range(1, ell + 1):
                for a, b in ((u, v), (v, u)):
                    emp = counts.get((t, a, b), 0) / total
                    per_step = max(per_step, abs(emp - unit * st.s[t - 1, a] * st.s[ell - t, b]))
                    emp_sum += emp
                pred_sum += 2 * unit * st.s[t - 1, u] * st.s[ell - t, v]
            summed = max(summed, abs(emp_sum - pred_sum))
    return per_step, summed


@check("OR-CLAIM-PRODUCT", "unique-influential-edge probabilities factor into survival products")
def _claim(ctx: Context) -> str:
    tables = oracles.all_truth_tables(3)
    worst = 0.0
    for bits in tables:
        t = TruthTable(3, bits)
        for ell in (1, 2, 4):
            per_step, summed = claim_deviation(t, ell)
            worst = max(worst, per_step, summed)
    require(worst <= 1e-9, f"max deviation {worst:.3g}")
    return f"all 256 functions at n=3, max deviation {worst:.2e}"


@check("OR-SANDWICH", "event sum <= exact rejection <= Pr[endpoints differ]")
def _sandwich(ctx: Context) -> str:
    tables = [TruthTable(n, b) for n in (2, 3) for b in oracles.all_truth_tables(n)]
    tables += [TruthTable(4, b) for b in ctx.n4_tables()[:256]]
    for t in tables:
        for ell in (1, 2, 3, 4):
            lower = oracles.event_probability_sum(t, ell)
            exact = oracles.exhaustive_rejection_probability(t, ell)
            upper = oracles.endpoint_difference_probability(t, ell)
            require(lower <= float(exact) + 1e-12 and exact <= upper, f"n={t.n} ell={ell}: {lower}, {exact}, {upper}")
    return f"{len(tables)} functions, ell<=4"


@check("OR-SIMPLE2-EXACT", "exact rejection >= ell |F_ell| / (4 n 2^n)")
def _simple2_exact(ctx: Context) -> str:
    tables = ctx.n4_tables()
    bad = simple2_exact_violations(tables, 4)
    require(not bad, f"{len(bad)} violations, first {bad[:3]}")
    return f"{len(tables)} functions at n=4, ell in 1,2,4"


def simple2_exact_violations(tables: np.ndarray, n: int, lengths=(1, 2, 4)) -> list[tuple[int, int]]:
    """(row, ell) pairs where the exact rejection probability is below the bound."""
    bad = []
    for ell in lengths:
        counts = oracles.exhaustive_rejection_counts(tables, n, ell)
        total = (1 << n) * n ** ell
        for row, bits in enumerate(tables):
            t = TruthTable(n, bits)
            f_size = len(oracles.sticky_set(t, ell))
            # counts / total >= ell * f_size / (4 n 2^n)
            if counts[row] * 4 * n * (1 << n) < ell * f_size * total:
                bad.append((row, ell))
    return bad


@check("OR-MINCUT-WITNESS", "min-cut distance matches brute force; witness valid")
def _mincut(ctx: Context) -> str:
    n4 = ctx.n4_tables() if ctx.level == "quick" else oracles.all_truth_tables(4)
    brute = oracles.distance_bruteforce_all(4)
    codes = n4.astype(np.int64) @ (1 << np.arange(16))
    for bits, code in zip(n4, codes):
        rep = oracles.distance_to_monotonicity(TruthTable(4, bits))
        require(rep.flips == brute[code], f"code {code}: cut {rep.flips} vs brute {brute[code]}")
    rng = Stream(ctx.seed, 77)
    checked = 0
    for n in ctx.scale.witness_n:
        for _ in range(4 if ctx.level == "quick" else 29):
            t = to_truth_table(instantiate(RandomBernoulli((1 + rng.below(9)) / 10, rng.next64() & 0xFFFF), n))
            rep = oracles.distance_to_monotonicity(t)
            require(oracles.is_monotone(rep.witness), f"n={n}: witness not monotone")
            require(int(np.count_nonzero(rep.witness.bits != t.bits)) == rep.flips, f"n={n}: witness distance")
            checked += 1
    return f"{len(n4)} functions at n=4; {checked} witnesses"


# --- tester ----------------------------------------------------------------

def _mc(ctx: Context, f, trials: int, ell: int | None, first: int = 0):
    return simulate(f, ctx.seed, np.arange(first, first + trials), ell=ell, lazy=ctx.lazy)


@check("TS-ONE-SIDED", "monotone functions never rejected; witnesses are violations")
def _one_sided(ctx: Context) -> str:
    trials = ctx.scale.mc_trials
    monotone = [instantiate(Dictator(3), 20), instantiate(Threshold(7), 15), instantiate(Majority(), 63)]
    monotone += [instantiate(RandomMonotone(ctx.seed + j, 1 + j % 5), 8 + j % 9) for j in range(10)]
    for f in monotone:
        require(_mc(ctx, f, trials // 10, None).rejected.sum() == 0, f"{f.label} rejected")
    maj = instantiate(Majority(), 101)
    for i in range(2000):
        require(not run_once(maj, Stream(ctx.seed, i)).rejected, "majority n=101 rejected")
    witnesses = 0
    for spec, n in random_corpus(10, range(4, 13), ctx.seed):
        f = instantiate(spec, n)
        res = _mc(ctx, f, 2000, None)
        for lower, coord in zip(res.witness_lower[res.rejected], res.witness_coord[res.rejected]):
            bit = 1 << (int(coord) - 1)
            require(f.query(int(lower)) == 1 and f.query(int(lower) | bit) == 0, "witness is not a violation")
            witnesses += 1
    return f"{len(monotone)} monotone functions, {witnesses} witnesses re-verified"


@check("TS-QUERY-BOUND", "distinct queries <= 2 + ceil(log2(ell + 1))")
def _query_bound(ctx: Context) -> str:
    worst = 0
    for spec, n in [(Parity(), 9), (RandomBernoulli(0.5, 3), 16), (AntiDictator(2), 33), (Parity(), 64)]:
        f = instantiate(spec, n)
        res = _mc(ctx, f, ctx.scale.mc_trials // 4, None)
        bound = np.array([distinct_query_bound(int(e)) for e in res.ell])
        require(np.all(res.queries_distinct <= bound), f"{spec} at n={n}")
        worst = max(worst, int(res.queries_distinct.max()))
    f = instantiate(Parity(), 1000)
    meter = QueryMeter(f)
    for i in range(300):
        out = run_once(meter, Stream(ctx.seed, i))
        require(out.queries_distinct <= distinct_query_bound(out.ell), "scalar bound at n=1000")
    return f"max distinct queries {worst}"


def agreement_sigmas(cells: int, family_alpha: float = 1e-3) -> float:
    """Per-cell z limit: at least 3, Bonferroni-widened over ``cells`` cells."""
    return max(3.0, float(norm.isf(family_alpha / (2 * cells))))


def _agreement_rows(ctx: Context, count: int):
    tables = ctx.n4_tables()[:count]
    per_cell = ctx.scale.mc_trials
    for j, bits in enumerate(tables):
        t = TruthTable(4, bits)
        for k, ell in enumerate((1, 2, 4)):
            exact = oracles.exhaustive_rejection_probability(t, ell)
            res = _mc(ctx, t, per_cell, ell, first=(3 * j + k) * per_cell)
            yield t, ell, exact, int(res.rejected.sum()), per_cell


@check("TS-ORACLE-AGREEMENT", "Monte Carlo matches exhaustive rejection probability")
def _agreement(ctx: Context) -> str:
    count = 5 if ctx.level == "quick" else 100
    limit = agreement_sigmas(3 * count)
    worst = 0.0
    for t, ell, exact, rej, trials in _agreement_rows(ctx, count):
        p = float(exact)
        se = math.sqrt(p * (1 - p) / trials)
        z = abs(rej / trials - p) / se if se else (0.0 if rej == p * trials else math.inf)
        worst = max(worst, z)
        require(z <= limit, f"ell={ell}: rate {rej / trials:.5f} vs exact {p:.5f} ({z:.1f} sigma)")
    return f"{count} functions x 3 ell, worst {worst:.2f} sigma (limit {limit:.2f})"


@check("TS-SIMPLE2-MC", "stratified rate + 3 stderr >= ell |F_ell| / (4 n 2^n)")
def _simple2_mc(ctx: Context) -> str:
    fs = [to_truth_table(instantiate(AntiDictator(1), 8))]
    fs += [to_truth_table(instantiate(RandomBernoulli(0.5, ctx.seed + j), 8 + 2 * (j % 3)))
           for j in range(3 if ctx.level == "quick" else 20)]
    cells = 0
    for f in fs:
        for row in mc_estimate(f, ctx.scale.mc_trials, ctx.seed, stratify_by_ell=True, lazy=ctx.lazy):
            require(lemma_bound_holds(row), f"n={row.n} ell={row.ell}: {row.rate} < {row.oracle_bound}")
            cells += 1
    return f"{cells} cells"


@check("TS-BINARY-SEARCH", "bisection returns an adjacent influential pair")
def _binary_search(ctx: Context) -> str:
    rng = Stream(ctx.seed, 31)
    done = 0
    while done < 3000:
        n = 2 + rng.below(12)
        f = instantiate(RandomBernoulli((1 + rng.below(9)) / 10, rng.next64() & 0xFFFF), n)
        path = random_walk(rng, sample_point(rng, n), 1 + rng.below(40))
        if f.query(path.start.index) == f.query(path.vertex_index(len(path))):
            continue
        edge, t = binary_search_influential(f, path)
        require(edge == edge_at(path, t), "edge is not p_{t-1} p_t")
        require(f.query(edge.lower.index) != f.query(edge.upper.index), "returned edge not influential")
        done += 1
    return "3000 paths"


# --- harness ---------------------------------------------------------------

@check("HN-DETERMINISM", "same config and seed give identical CSV")
def _hn_determinism(ctx: Context) -> str:
    cfg = ExperimentConfig("blended(base=threshold(3),noise_coord=1,subcube_mask=2,seed=5)", (5, 6), 20_000,
                           ctx.seed, True)
    require(rows_to_csv(run_sweep(cfg)) == rows_to_csv(run_sweep(cfg)), "sweep output changed")
    require(ExperimentConfig.from_text(cfg.to_text()) == cfg, "config did not round-trip")
    f = to_truth_table(instantiate(RandomBernoulli(0.4, 2), 6))
    a = mc_estimate(f, 3 * 2**18 + 5, ctx.seed, workers=1)
    b = mc_estimate(f, 3 * 2**18 + 5, ctx.seed, workers=2)
    require(a == b, "worker count changed the estimate")
    return "sweep, config and worker-count determinism"


@check("HN-CSV-SCHEMA", "CSV header and empty oracle fields")
def _csv_schema(ctx: Context) -> str:
    rows = mc_estimate(instantiate(Parity(), 40), 1000, ctx.seed)
    text = rows_to_csv(rows)
    lines = text.splitlines()
    require(lines[0] == ",".join(CSV_HEADER), f"header {lines[0]!r}")
    require(lines[1].endswith(",,"), "missing oracle values must be empty fields")
    for row in rows:
        low, high = row.wilson
        require(low <= row.rate <= high and row.rejections <= row.trials, "Wilson interval order")
    return "schema ok"


REQUIRED = frozenset({
    "HC-CANONICAL", "HC-STATIONARY", "HC-UNIFORM-EDGE", "HC-REPRODUCIBLE",
    "FM-METER", "FM-DETERMINISM", "FM-MONOTONE-GENERATOR",
    "OR-EDGE-COUNT", "OR-LEMMA-SIMPLE", "OR-STICKY-NESTING", "OR-CLAIM-PRODUCT", "OR-SANDWICH",
    "OR-SIMPLE2-EXACT", "OR-MINCUT-WITNESS",
    "TS-ONE-SIDED", "TS-QUERY-BOUND", "TS-ORACLE-AGREEMENT", "TS-SIMPLE2-MC", "TS-BINARY-SEARCH",
    "HN-DETERMINISM", "HN-CSV-SCHEMA",
})


@dataclass(frozen=True)
class Report:
    level: str
    results: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {"level": self.level, "passed": self.passed, "checks": [r.to_dict() for r in self.results]}


def verify(level: str = "quick", seed: int = 0, lazy_walk: bool = False, only=None,
           progress: Callable[[CheckResult], None] | None = None) -> Report:
    """Run the invariant suite.  ``lazy_walk`` tampers with the batch tester."""
    if level not in SCALES:
        raise ValueError(f"level must be one of {sorted(SCALES)}")
    ctx = Context(level, seed, lazy_walk)
    results = []
    missing = sorted(REQUIRED - set(_CHECKS))
    results.append(CheckResult("META-COVERAGE", not missing,
                               f"missing checks: {missing}" if missing else f"{len(REQUIRED)} invariants registered", 0.0))
    for ident, (title, fn) in _CHECKS.items():
        if only is not None and ident not in only:
            continue
        start = time.perf_counter()
        try:
            detail, ok = fn(ctx), True
        except CheckFailed as exc:
            detail, ok = str(exc), False
        except Exception as exc:  # a crash is a failure, never a skip
            detail, ok = f"{type(exc).__name__}: {exc}", False
        result = CheckResult(ident, ok, f"{title}: {detail}", time.perf_counter() - start)
        results.append(result)
        if progress:
            progress(result)
    return Report(level, tuple(results))
