"""Monte Carlo estimation, family sweeps and CSV output."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import oracles
from .batch import simulate, supports_batch
from .functions import format_family, instantiate, parse_family, to_truth_table
from .hypercube import ceil_log2
from .rng import Stream
from .stats import binomial_stderr, wilson_interval
from .tester import run_once

CSV_HEADER = ("family", "n", "ell", "trials", "rejections", "rate", "wilson_low",
              "wilson_high", "mean_queries", "oracle_bound", "exact_rate")

ORACLE_MAX_N = 16
_CHUNK = 1 << 18


@dataclass(frozen=True)
class EstimateRow:
    family: str
    n: int
    ell: int | str
    trials: int
    rejections: int
    mean_queries: float
    oracle_bound: float | None = None
    exact_rate: Fraction | None = None

    @property
    def rate(self) -> float:
        return self.rejections / self.trials

    @property
    def stderr(self) -> float:
        return binomial_stderr(self.rejections, self.trials)

    @property
    def wilson(self) -> tuple[float, float]:
        return wilson_interval(self.rejections, self.trials)

    def csv_values(self) -> list[str]:
        low, high = self.wilson
        return [self.family, str(self.n), str(self.ell), str(self.trials), str(self.rejections),
                repr(self.rate), repr(low), repr(high), repr(self.mean_queries),
                "" if self.oracle_bound is None else repr(self.oracle_bound),
                "" if self.exact_rate is None else repr(float(self.exact_rate))]


def _count_scalar(f, seed: int, ids: np.ndarray, ell: int | None) -> tuple[int, int]:
    rejections = queries = 0
    for i in ids:
        out = run_once(f, Stream(seed, int(i)), ell)
        rejections += out.rejected
        queries += out.queries_distinct
    return rejections, queries


def _count_chunk(f, seed: int, lo: int, hi: int, ell: int | None, lazy: bool) -> tuple[int, int]:
    ids = np.arange(lo, hi, dtype=np.uint64)
    if supports_batch(f):
        res = simulate(f, seed, ids, ell, lazy=lazy)
        return int(res.rejected.sum()), int(res.queries_distinct.sum())
    if lazy:
        raise ValueError("the lazy-walk mutation is only available in batch mode")
    return _count_scalar(f, seed, ids, ell)


def count_rejections(f, seed: int, first: int, count: int, ell: int | None = None,
                     workers: int = 1, lazy: bool = False) -> tuple[int, int]:
    """Rejections and summed distinct queries over trials first..first+count-1.

    Trial i always uses stream (seed, i), so the result does not depend on
    the chunking or on ``workers``.
    """
    bounds = [(lo, min(first + count, lo + _CHUNK)) for lo in range(first, first + count, _CHUNK)]
    if workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_count_chunk, *zip(*[(f, seed, lo, hi, ell, lazy) for lo, hi in bounds])))
    else:
        parts = [_count_chunk(f, seed, lo, hi, ell, lazy) for lo, hi in bounds]
    return sum(p[0] for p in parts), sum(p[1] for p in parts)


@dataclass
class _Oracles:
    bounds: dict[int, float] = field(default_factory=dict)
    exact: dict[int, Fraction] = field(default_factory=dict)


def _oracle_columns(f, lengths: list[int]) -> _Oracles:
    out = _Oracles()
    if f.n > ORACLE_MAX_N:
        return out
    table = to_truth_table(f)
    st = oracles.survival_table(table, max(lengths))
    denom = 4 * table.n * (1 << table.n)
    for ell in lengths:
        out.bounds[ell] = ell * len(oracles.sticky_set(table, ell, st)) / denom
        if table.n <= oracles.MAX_EXHAUSTIVE_N and ell <= oracles.MAX_EXHAUSTIVE_ELL:
            out.exact[ell] = oracles.exhaustive_rejection_probability(table, ell)
    return out


def mc_estimate(f, trials: int, seed: int, stratify_by_ell: bool = False, family: str | None = None,
                workers: int = 1, with_oracles: bool = True, lazy: bool = False) -> list[EstimateRow]:
    """Monte Carlo rejection rates of the tester on ``f``.

    Mixed mode draws the walk length per trial as the tester does and
    returns one row.  Stratified mode fixes ell = 2**k for each k in turn,
    running ``trials // (ceil(log2 n) + 1)`` trials each, and returns one row
    per ell.  Oracle columns are filled when n is small enough.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    n = f.n
    label = family if family is not None else getattr(f, "label", "")
    lengths = [1 << k for k in range(ceil_log2(n) + 1)]
    orc = _oracle_columns(f, lengths) if with_oracles else _Oracles()
    if not stratify_by_ell:
        rej, queries = count_rejections(f, seed, 0, trials, None, workers, lazy)
        bound = exact = None
        if len(orc.bounds) == len(lengths):
            bound = sum(orc.bounds.values()) / len(lengths)
        if len(orc.exact) == len(lengths):
            exact = sum(orc.exact.values(), Fraction(0)) / len(lengths)
        return [EstimateRow(label, n, "mixed", trials, rej, queries / trials, bound, exact)]
    per = trials // len(lengths)
    if per < 1:
        raise ValueError(f"need at least {len(lengths)} trials to stratify over {len(lengths)} walk lengths")
    rows = []
    for k, ell in enumerate(lengths):
        rej, queries = count_rejections(f, seed, k * per, per, ell, workers, lazy)
        rows.append(EstimateRow(label, n, ell, per, rej, queries / per,
                                orc.bounds.get(ell), orc.exact.get(ell)))
    return rows


def write_csv(rows: list[EstimateRow], out) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.csv_values())


def rows_to_csv(rows: list[EstimateRow]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


# --- experiment configuration ----------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    family: str
    n_values: tuple[int, ...]
    trials: int = 100_000
    seed: int = 0
    stratify_by_ell: bool = False
    output: str | None = None
    workers: int = 1

    def __post_init__(self):
        # canonical spelling, so the file form round-trips exactly
        object.__setattr__(self, "family", format_family(parse_family(self.family)))
        object.__setattr__(self, "n_values", tuple(self.n_values))
        if not self.n_values or any(n < 1 for n in self.n_values):
            raise ValueError("n_values must be a nonempty list of positive integers")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0 <= self.seed < 1 << 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def to_text(self) -> str:
        lines = [
            f"family={self.family}",
            f"n_values={','.join(map(str, self.n_values))}",
            f"trials={self.trials}",
            f"seed={self.seed}",
            f"stratify_by_ell={'true' if self.stratify_by_ell else 'false'}",
            f"workers={self.workers}",
        ]
        if self.output is not None:
            lines.append(f"output={self.output}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        raw: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
            key = key.strip()
            if key in raw:
                raise ValueError(f"line {lineno}: duplicate key {key!r}")
            raw[key] = value.strip()
        unknown = set(raw) - {"family", "n_values", "trials", "seed", "stratify_by_ell", "output", "workers"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "family" not in raw or "n_values" not in raw:
            raise ValueError("config needs at least family and n_values")
        flag = raw.get("stratify_by_ell", "false").lower()
        if flag not in ("true", "false"):
            raise ValueError(f"stratify_by_ell must be true or false, got {flag!r}")
        return cls(
            family=raw["family"],
            n_values=tuple(int(v) for v in raw["n_values"].split(",")),
            trials=int(raw.get("trials", 100_000)),
            seed=int(raw.get("seed", 0)),
            stratify_by_ell=flag == "true",
            output=raw.get("output") or None,
            workers=int(raw.get("workers", 1)),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())


def sweep_function(family: str, n: int):
    f = instantiate(parse_family(family), n)
    if n <= 20:
        table = to_truth_table(f)
        table.label = f.label
        return table
    return f


def run_sweep(config: ExperimentConfig, out=None) -> list[EstimateRow]:
    """One row per (n, ell) cell, written as CSV to ``out`` or ``config.output``."""
    rows = []
    for n in config.n_values:
        f = sweep_function(config.family, n)
        rows += mc_estimate(f, config.trials, config.seed, config.stratify_by_ell,
                            family=config.family, workers=config.workers)
    if out is not None:
        write_csv(rows, out)
    elif config.output is not None:
        with open(config.output, "w", newline="") as fh:
            write_csv(rows, fh)
    return rows


def lemma_bound_holds(row: EstimateRow, sigmas: float = 3.0) -> bool | None:
    """rate + sigmas * stderr >= oracle_bound, or None without an oracle bound."""
    if row.oracle_bound is None:
        return None
    return row.rate + sigmas * row.stderr >= row.oracle_bound


def matches_exact(row: EstimateRow, sigmas: float = 3.0) -> bool | None:
    """|rate - exact| within ``sigmas`` standard errors of the exact rate."""
    if row.exact_rate is None:
        return None
    p = float(row.exact_rate)
    se = math.sqrt(p * (1 - p) / row.trials)
    return abs(row.rate - p) <= sigmas * se + 1e-15
