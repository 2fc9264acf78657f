"""Command-line interface: optimize, run, bench, stats, verify.

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification
failure, 4 resource limit.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .bench import (
    ENGINES,
    FAMILIES,
    WorkloadSpec,
    aggregate_csv,
    aggregate_rows,
    aggregate_text,
    bench_stream,
    builtin_corpus,
    corpus_stream,
    generate_workload,
    match_file_name,
    plan_file_name,
    plan_json_text,
    rows_to_csv,
    run_benchmark,
    verify_pattern,
)
from .model import (
    OrderPlan,
    ResourceLimitError,
    SelectionStrategy,
    StatisticsCatalog,
    StreamCepError,
)
from .nfa import DEFAULT_KL_CAP
from .oracle import DEFAULT_CORESIDENT_LIMIT
from .parser import parse_pattern
from .plangen import (
    ALGORITHM_NAMES,
    bundle_from_json,
    bundle_to_json,
    generate_plan,
)
from .runner import PatternRunner
from .stream import estimate_statistics, ingest_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3
EXIT_RESOURCE = 4


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract reserves 1 for those."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.exit_with(message))

    def exit_with(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return EXIT_USAGE


def _strategy(text: str) -> SelectionStrategy:
    kind, _, key = text.partition(":")
    try:
        return SelectionStrategy(kind, key or None)
    except StreamCepError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _sizes(text: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("no sizes given")
    return tuple(out)


def _names(text: str, known, label: str) -> tuple[str, ...]:
    if text == "all":
        return tuple(known)
    picked = tuple(p.strip() for p in text.split(",") if p.strip())
    for name in picked:
        if name not in known:
            raise argparse.ArgumentTypeError(f"unknown {label} {name!r}")
    return picked


def _read(path: str) -> str:
    try:
        with open(path) as handle:
            return handle.read()
    except OSError as exc:
        raise StreamCepError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w") as handle:
            handle.write(text)
    except OSError as exc:
        raise StreamCepError(f"cannot write {path}: {exc.strerror}") from None


def _load_pattern(args):
    pattern = parse_pattern(_read(args.pattern), strategy=args.strategy)
    if getattr(args, "window", None) is not None:
        pattern = replace(pattern, window=args.window)
    return pattern


def _plan_summary(bundle) -> str:
    lines = [f"algorithm: {bundle.algorithm}"]
    for index, planned in enumerate(bundle.conjuncts):
        plan = planned.plan
        if isinstance(plan, OrderPlan):
            shape = " ".join(plan.order)
        else:
            def fmt(node):
                if node.is_leaf:
                    return node.type_name
                return f"({fmt(node.left)},{fmt(node.right)})"
            shape = fmt(plan.root)
        rep = planned.report
        lines.append(
            f"conjunct {index}: {shape} | cost {rep.cost:.6g} | "
            f"{rep.candidates} candidates | {rep.wall_time * 1e3:.2f} ms"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Subcommands


def cmd_optimize(args) -> int:
    pattern = _load_pattern(args)
    stats = StatisticsCatalog.from_json(_read(args.stats))
    bundle = generate_plan(
        pattern, stats, args.algorithm, alpha=args.alpha, seed=args.seed,
    )
    _write(args.out, plan_json_text(bundle_to_json(bundle)))
    sys.stderr.write(_plan_summary(bundle))
    return EXIT_OK


def cmd_run(args) -> int:
    pattern = _load_pattern(args)
    bundle = bundle_from_json(json.loads(_read(args.plan)))
    source = ingest_csv(args.stream)
    runner = PatternRunner(pattern, bundle, engine=args.engine, kl_cap=args.kl_cap)
    result = runner.run(source.events)
    lines = "".join(
        ",".join(str(s) for s in report.serials) + "\n"
        for report in result.reports
    )
    _write(args.out, lines)
    latency = result.mean_latency
    sys.stdout.write("events,matches,throughput,memory_peak,mean_latency,kl_overflows\n")
    sys.stdout.write(
        f"{result.events},{result.matches},{result.throughput:.6g},"
        f"{result.memory_peak},"
        f"{'' if latency is None else format(latency, '.6g')},"
        f"{result.kl_overflows}\n"
    )
    return EXIT_OK


def cmd_stats(args) -> int:
    source = ingest_csv(args.stream)
    patterns = [
        parse_pattern(_read(path)) for path in args.patterns
    ]
    if args.window is not None:
        patterns = [replace(p, window=args.window) for p in patterns]
    catalog = estimate_statistics(
        source, patterns, max_pairs=args.max_pairs, seed=args.seed,
    )
    _write(args.out, catalog.to_json() + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = WorkloadSpec(
        families=args.families,
        sizes=args.sizes,
        patterns_per_size=args.patterns_per_size,
        window=args.window if args.window is not None else 20.0,
        strategy=args.strategy or SelectionStrategy(),
        seed=args.seed,
    )
    if args.stream is not None:
        source = ingest_csv(args.stream)
        patterns = generate_workload(spec, universe=source.type_names())
    else:
        source = bench_stream(spec, duration=args.duration)
        patterns = None
    alphas = (0.0, 0.5, 1.0) if args.alpha_sweep else (args.alpha,)
    out_dir = args.out
    result = run_benchmark(
        spec, source,
        algorithms=args.algorithms,
        engines=args.engines,
        alphas=alphas,
        threads=args.threads,
        kl_cap=args.kl_cap,
        collect_matches=out_dir is not None,
        patterns=patterns,
    )
    csv_text = rows_to_csv(result.rows)
    sys.stdout.write(csv_text)
    for group_by in ("family", "size"):
        agg = aggregate_rows(result.rows, group_by)
        sys.stderr.write(aggregate_text(agg, group_by))
        sys.stderr.write("\n")
    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, "plans"), exist_ok=True)
        os.makedirs(os.path.join(out_dir, "matches"), exist_ok=True)
        _write(os.path.join(out_dir, "rows.csv"), csv_text)
        for group_by in ("family", "size"):
            agg = aggregate_rows(result.rows, group_by)
            _write(
                os.path.join(out_dir, f"aggregate_{group_by}.csv"),
                aggregate_csv(agg, group_by),
            )
            _write(
                os.path.join(out_dir, f"aggregate_{group_by}.txt"),
                aggregate_text(agg, group_by),
            )
        written = set()
        for cell in result.cells:
            row = cell.row
            if cell.plan_json is not None:
                name = plan_file_name(row.pattern_id, row.algorithm, row.alpha)
                if name not in written:
                    written.add(name)
                    _write(
                        os.path.join(out_dir, "plans", name),
                        plan_json_text(cell.plan_json),
                    )
            if cell.match_lines is not None:
                name = match_file_name(
                    row.pattern_id, row.algorithm, row.engine, row.alpha
                )
                _write(
                    os.path.join(out_dir, "matches", name),
                    "".join(line + "\n" for line in cell.match_lines),
                )
    failures = sum(1 for row in result.rows if not row.ok)
    if failures:
        sys.stderr.write(f"{failures} cell(s) failed; see status column\n")
    return EXIT_OK


def _print_cells(label: str, cells) -> bool:
    all_ok = True
    for cell in cells:
        state = "PASS" if cell.passed else "FAIL"
        print(f"{state} {label} algorithm={cell.algorithm} engine={cell.engine}")
        if not cell.passed:
            all_ok = False
            if cell.error:
                print(f"  error: {cell.error}")
            if cell.missing:
                print(f"  missing: {' '.join(cell.missing)}")
            if cell.extra:
                print(f"  extra: {' '.join(cell.extra)}")
    return all_ok


def cmd_verify(args) -> int:
    if args.corpus:
        source = corpus_stream()
        ok = True
        for generated in builtin_corpus():
            cells = verify_pattern(
                generated.pattern, source,
                seed=args.seed, kl_cap=args.kl_cap,
                max_coresident=args.max_coresident,
            )
            ok = _print_cells(generated.pattern_id, cells) and ok
        return EXIT_OK if ok else EXIT_VERIFY

    if args.pattern is None or args.stream is None:
        raise StreamCepError("verify needs a pattern file and a stream file, or --corpus")
    pattern = _load_pattern(args)
    source = ingest_csv(args.stream)
    bundle = None
    engines = args.engines
    if args.plan is not None:
        bundle = bundle_from_json(json.loads(_read(args.plan)))
        plan_is_order = isinstance(bundle.conjuncts[0].plan, OrderPlan)
        if not plan_is_order:
            engines = tuple(e for e in engines if e == "tree") or ("tree",)
    cells = verify_pattern(
        pattern, source,
        engines=engines,
        seed=args.seed,
        kl_cap=args.kl_cap,
        max_coresident=args.max_coresident,
        bundle=bundle,
    )
    ok = _print_cells(os.path.basename(args.pattern), cells)
    return EXIT_OK if ok else EXIT_VERIFY


# ---------------------------------------------------------------------------
# Parser wiring


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="streamcep",
        description="Plan-driven complex event processing at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, window=True, seed=True):
        if window:
            p.add_argument("--window", type=float, default=None,
                           help="override the pattern's window (seconds)")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    opt = sub.add_parser("optimize", help="plan a pattern against a statistics file")
    opt.add_argument("pattern", help="pattern file")
    opt.add_argument("stats", help="statistics JSON file")
    opt.add_argument("--algorithm", default="greedy", choices=ALGORITHM_NAMES)
    opt.add_argument("--alpha", type=float, default=0.0)
    opt.add_argument("--strategy", type=_strategy, default=None)
    opt.add_argument("--out", default=None, help="plan file (default: stdout)")
    common(opt)
    opt.set_defaults(func=cmd_optimize)

    run = sub.add_parser("run", help="execute a plan over a CSV stream")
    run.add_argument("plan", help="plan JSON file")
    run.add_argument("pattern", help="pattern file")
    run.add_argument("stream", help="CSV stream file")
    run.add_argument("--engine", default="auto", choices=("auto",) + ENGINES)
    run.add_argument("--strategy", type=_strategy, default=None)
    run.add_argument("--kl-cap", type=int, default=DEFAULT_KL_CAP)
    run.add_argument("--out", default="matches.txt",
                     help="match file, one serial tuple per line")
    common(run)
    run.set_defaults(func=cmd_run)

    stats = sub.add_parser("stats", help="estimate statistics from a CSV stream")
    stats.add_argument("stream", help="CSV stream file")
    stats.add_argument("patterns", nargs="+", help="pattern files")
    stats.add_argument("--max-pairs", type=int, default=100_000)
    stats.add_argument("--out", default=None, help="statistics file (default: stdout)")
    common(stats)
    stats.set_defaults(func=cmd_stats)

    bench = sub.add_parser("bench", help="benchmark algorithms over a workload")
    bench.add_argument("--families", type=lambda t: _names(t, FAMILIES, "family"),
                       default=FAMILIES)
    bench.add_argument("--sizes", type=_sizes, default=(3, 4, 5))
    bench.add_argument("--patterns-per-size", type=int, default=1)
    bench.add_argument("--strategy", type=_strategy, default=None)
    bench.add_argument("--algorithm", dest="algorithms",
                       type=lambda t: _names(t, ALGORITHM_NAMES, "algorithm"),
                       default=ALGORITHM_NAMES)
    bench.add_argument("--engine", dest="engines",
                       type=lambda t: _names(t, ENGINES, "engine"),
                       default=ENGINES)
    bench.add_argument("--alpha", type=float, default=0.0)
    bench.add_argument("--alpha-sweep", action="store_true",
                       help="run alpha in {0, 0.5, 1}")
    bench.add_argument("--duration", type=float, default=240.0,
                       help="synthetic stream length (seconds)")
    bench.add_argument("--stream", default=None,
                       help="CSV stream to use instead of a synthetic one")
    bench.add_argument("--threads", type=int, default=None,
                       help="parallel cells (default: CEP_PLANNER_THREADS or 1)")
    bench.add_argument("--kl-cap", type=int, default=DEFAULT_KL_CAP)
    bench.add_argument("--out", default=None,
                       help="directory for rows, aggregates, plans, matches")
    common(bench)
    bench.set_defaults(func=cmd_bench)

    verify = sub.add_parser("verify", help="compare engines against exhaustive matching")
    verify.add_argument("pattern", nargs="?", default=None, help="pattern file")
    verify.add_argument("stream", nargs="?", default=None, help="CSV stream file")
    verify.add_argument("--corpus", action="store_true",
                        help="verify the built-in pattern corpus instead")
    verify.add_argument("--plan", default=None,
                        help="verify one serialized plan instead of all algorithms")
    verify.add_argument("--engine", dest="engines",
                        type=lambda t: _names(t, ENGINES, "engine"),
                        default=ENGINES)
    verify.add_argument("--strategy", type=_strategy, default=None)
    verify.add_argument("--kl-cap", type=int, default=DEFAULT_CORESIDENT_LIMIT)
    verify.add_argument("--max-coresident", type=int,
                        default=DEFAULT_CORESIDENT_LIMIT)
    common(verify)
    verify.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return EXIT_OK if code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except StreamCepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
