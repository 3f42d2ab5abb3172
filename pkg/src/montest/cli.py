"""Command-line entry point: ``montest gen|analyze|test|bench|verify``.

Exit status: 0 accept or success, 1 reject, 2 usage error, 3 verify failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import oracles
from .functions import format_family, instantiate, load, parse_family, save, to_truth_table
from .harness import ExperimentConfig, run_sweep
from .hypercube import Edge, Point
from .rng import Stream
from .tester import calibrate_repetitions, check_monotonicity, is_violation
from .verify import verify

EXIT_OK, EXIT_REJECT, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _n_values(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def parse_edge(text: str) -> Edge:
    """``"(0111, 1111)"`` or ``"0111,1111"``: the two endpoints as bit strings."""
    parts = [p.strip() for p in text.strip().strip("()").split(",")]
    if len(parts) != 2:
        raise ValueError(f"edge must name two endpoints, got {text!r}")
    return Edge.between(Point.from_bits(parts[0]), Point.from_bits(parts[1]))


def _load_table(path: str):
    try:
        return load(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _with_seed(spec, seed: int | None):
    # --seed fills in the generator seed unless the family text names one
    if seed is None or "seed" not in {f.name for f in dataclasses.fields(spec)}:
        return spec
    return dataclasses.replace(spec, seed=seed)


def cmd_gen(args) -> int:
    spec = parse_family(args.family)
    if "seed=" not in args.family.replace(" ", ""):
        spec = _with_seed(spec, args.seed)
    table = to_truth_table(instantiate(spec, args.n))
    if args.output:
        try:
            save(table, args.output)
        except OSError as exc:
            raise UsageError(f"cannot write {args.output}: {exc.strerror or exc}") from None
    else:
        sys.stdout.write(f"n={table.n}\n{table.to_string()}\n")
    print(f"# {format_family(spec)} n={args.n}", file=sys.stderr)
    return EXIT_OK


def cmd_analyze(args) -> int:
    table = _load_table(args.file)
    report = oracles.analyze(table)
    data = report.to_dict()
    data.pop("family")
    if args.edge:
        edge = parse_edge(args.edge)
        if edge.lower.n != table.n:
            raise UsageError(f"edge has dimension {edge.lower.n}, function has {table.n}")
        data["edge"] = str(edge)
        data["edge_violating"] = is_violation(table, edge)
    if args.json:
        print(json.dumps(data, indent=2))
        return EXIT_OK
    print(f"n={report.n}")
    print(f"influential_edges={report.influential_count}")
    print(f"violating_edges={report.violating_count}")
    print(f"total_influence={report.total_influence}")
    print(f"distance={'' if report.distance is None else report.distance}")
    for ell, size in (report.f_ell_sizes or {}).items():
        print(f"F_{ell}={size}")
    if args.edge:
        print(f"edge {data['edge']} violating={'yes' if data['edge_violating'] else 'no'}")
    return EXIT_OK


def cmd_test(args) -> int:
    table = _load_table(args.file)
    reps = args.repetitions
    if reps is None and args.mode == "pilot":
        reps = calibrate_repetitions(table, args.pilot_trials, args.seed, max_repetitions=args.max_repetitions)
    out = check_monotonicity(table, args.epsilon, Stream(args.seed, 0), influence_bound=args.influence_bound,
                             constant_c=args.constant_c, max_repetitions=args.max_repetitions,
                             repetitions=reps)
    print(f"verdict={out.verdict.value}")
    print(f"regime={out.regime} repetitions={out.repetitions}")
    print(f"queries_total={out.queries_total} queries_distinct={out.queries_distinct}")
    if out.rejected:
        print(f"witness={out.witness}")
        return EXIT_REJECT
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        if args.config:
            config = ExperimentConfig.load(args.config)
        else:
            if not args.family or not args.n:
                raise UsageError("bench needs --config or both --family and --n")
            config = ExperimentConfig(args.family, args.n)
        overrides = {k: v for k, v in (("seed", args.seed), ("trials", args.trials), ("output", args.output),
                                         ("workers", args.workers)) if v is not None}
        if args.stratify:
            overrides["stratify_by_ell"] = True
        config = dataclasses.replace(config, **overrides)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise UsageError(f"invalid config: {exc}") from None
    if config.output is not None:
        try:
            open(config.output, "a").close()
        except OSError as exc:
            raise UsageError(f"cannot write {config.output}: {exc.strerror or exc}") from None
        run_sweep(config)
    else:
        run_sweep(config, out=sys.stdout)
    return EXIT_OK


def cmd_verify(args) -> int:
    def progress(result):
        if not args.json:
            mark = "PASS" if result.passed else "FAIL"
            print(f"{mark} {result.id} ({result.seconds:.1f}s) {result.detail}", flush=True)

    report = verify(args.level, args.seed, lazy_walk=args.lazy_walk, progress=progress)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        meta = report.results[0]
        print(f"{'PASS' if meta.passed else 'FAIL'} {meta.id} {meta.detail}")
        print("verify: " + ("passed" if report.passed else "FAILED"))
    return EXIT_OK if report.passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="montest", description="Adaptive monotonicity testing laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, seed_default):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=_seed, default=seed_default, help="64-bit unsigned seed")
        return p

    p = add("gen", "write a truth-table file for a function family", None)
    p.add_argument("--family", required=True, help="e.g. antidictator, threshold(3), bernoulli(p=0.3)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--output", "-o")
    p.set_defaults(run=cmd_gen)

    p = add("analyze", "exact oracle report for a truth-table file", 0)
    p.add_argument("file")
    p.add_argument("--edge", help="also check one edge, e.g. '(0111, 1111)'")
    p.add_argument("--json", action="store_true")
    p.set_defaults(run=cmd_analyze)

    p = add("test", "run the amplified tester on a truth-table file", 0)
    p.add_argument("file")
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--influence-bound", type=float)
    p.add_argument("--mode", choices=("pilot", "formula"), default="pilot",
                   help="pick the repetition count from a pilot estimate or from the asymptotic formula")
    p.add_argument("--repetitions", type=int, help="fixed repetition count; overrides --mode")
    p.add_argument("--pilot-trials", type=int, default=20_000)
    p.add_argument("--constant-c", type=float, default=64.0)
    p.add_argument("--max-repetitions", type=int, default=10_000)
    p.set_defaults(run=cmd_test)

    p = add("bench", "Monte Carlo sweep to CSV", None)
    p.add_argument("--config", help="key=value experiment file")
    p.add_argument("--family")
    p.add_argument("--n", type=_n_values, help="comma-separated dimensions")
    p.add_argument("--trials", type=int)
    p.add_argument("--stratify", action="store_true", help="one row per walk length")
    p.add_argument("--workers", type=int)
    p.add_argument("--output", "-o")
    p.set_defaults(run=cmd_bench)

    p = add("verify", "run the invariant suite", 0)
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--json", action="store_true", help="machine-readable report on stdout")
    p.add_argument("--lazy-walk", action="store_true", help="tamper: make the batch walk lazy")
    p.set_defaults(run=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.run(args)
    except (UsageError, ValueError) as exc:
        print(f"montest {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
