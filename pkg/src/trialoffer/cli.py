"""Command-line interface.

Subcommands: ``reduce`` (write the reduced instance and its transformation
table), ``optimize`` (best ranking for either objective), ``simulate``
(run an experiment sweep into a result store), ``verify`` (randomized
property suite) and ``plot-data`` (per-cell scatter and trajectory CSVs).

Exit codes: 0 success, 1 verification failure, 2 config or parse error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .instances import ConfigError, ParseError, load_experiment, load_market, save_market
from .market import reduce_market
from .policies import brute_force_ranking, performance_ranking, performance_ranking_with_continuation
from .store import CellKey, emit_plot_data, run_experiment
from .verify import run_checks

OUTPUT_DIR_ENV = "TRIALOFFER_OUTPUT_DIR"


def _cmd_reduce(args) -> int:
    market = load_market(args.market)
    reduced = reduce_market(market)
    out = Path(args.output) if args.output else Path(args.market).with_suffix(".reduced.json")
    save_market(reduced, out)
    cont = market.continuation_values()
    print(f"{'product':>7}  {'quality':>16}  {'continuation':>16}  "
          f"{'reduced_quality':>16}  {'reduced_appeal':>16}")
    for i in range(market.n):
        print(
            f"{i + 1:>7}  {market.quality[i]:>16.12g}  {cont[i]:>16.12g}  "
            f"{reduced.quality[i]:>16.12g}  {reduced.appeal[i]:>16.12g}"
        )
    print(f"reduced market written to {out}")
    return 0


def _cmd_optimize(args) -> int:
    market = load_market(args.market)
    if args.objective == "lambda":
        market = market.without_continuation()
        report = (
            brute_force_ranking(market, objective="lambda")
            if args.method == "brute"
            else performance_ranking(market)
        )
    else:
        report = (
            brute_force_ranking(market, objective="lambda-bar")
            if args.method == "brute"
            else performance_ranking_with_continuation(market)
        )
    order = report.ranking.product_list()
    print(f"list order: {order}")
    print(f"objective ({args.objective}): {report.objective!r}")
    print(f"iterations: {report.iterations}")
    print(f"method: {report.method}")
    out = Path(args.output) if args.output else Path(args.market).with_suffix(".ranking.json")
    out.write_text(
        json.dumps(
            {
                "list_order": order,
                "positions": [int(p) + 1 for p in report.ranking.positions],
                "objective": report.objective,
                "objective_kind": args.objective,
                "iterations": report.iterations,
                "method": report.method,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"ranking written to {out}")
    return 0


def _matrix_lines(title, spec, cell_value, include_baseline):
    labels = [p.label for p in spec.policies]
    lines = [title, "cell".ljust(18) + "".join(f"{lab:>12}" for lab in labels)]
    rows = ([None] if include_baseline else []) + list(spec.sweep)
    for cell in rows:
        if cell is None:
            name, keys = "none", [CellKey(policy=p) for p in spec.policies]
        else:
            name = f"rho={cell[0]:g}, r={cell[1]:g}"
            keys = [CellKey(policy=p, rho=cell[0], r=cell[1]) for p in spec.policies]
        vals = "".join(f"{cell_value(k):>12.1f}" for k in keys)
        lines.append(name.ljust(18) + vals)
    return lines


def _cmd_simulate(args) -> int:
    spec = load_experiment(args.spec)
    output_dir = args.output_dir or spec.output_dir or os.environ.get(OUTPUT_DIR_ENV)
    if not output_dir:
        raise ConfigError(
            "no output directory: pass --output-dir, set 'output_dir' in the "
            f"experiment file, or set ${OUTPUT_DIR_ENV}"
        )
    run = run_experiment(spec, output_dir, workers=args.workers, progress=print)
    print()
    for line in _matrix_lines(
        "Market efficiency (mean total downloads per replication)",
        spec,
        lambda k: run.results[k].efficiency,
        include_baseline=True,
    ):
        print(line)
    print()
    improvements = {(row.rho, row.r, row.policy): row for row in run.improvements}
    for line in _matrix_lines(
        "Efficiency improvement over the no-continuation baseline (%)",
        spec,
        lambda k: improvements[(k.rho, k.r, k.policy)].improvement_pct,
        include_baseline=False,
    ):
        print(line)
    print(f"\nresult store: {run.root}")
    return 0


def _cmd_verify(args) -> int:
    results = run_checks(instances=args.instances, seed=args.seed, sessions=args.sessions)
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        failed += not res.passed
        print(f"{status}  {res.name}: {res.detail}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def _cmd_plot_data(args) -> int:
    for path in emit_plot_data(args.store):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trialoffer",
        description="Trial-offer markets with continuation: reduction, ranking "
        "optimization, agent-based simulation, and property verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reduce", help="reduce a market with continuation to a plain one")
    p.add_argument("market", help="market JSON file")
    p.add_argument("--output", help="path for the reduced market (default: <market>.reduced.json)")
    p.set_defaults(func=_cmd_reduce)

    p = sub.add_parser("optimize", help="compute the best ranking for a market file")
    p.add_argument("market", help="market JSON file")
    p.add_argument(
        "--objective",
        choices=("lambda", "lambda-bar"),
        default="lambda-bar",
        help="plain expected purchases or expected purchases with continuation",
    )
    p.add_argument("--method", choices=("parametric", "brute"), default="parametric")
    p.add_argument("--output", help="path for the ranking report (default: <market>.ranking.json)")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("simulate", help="run an experiment sweep into a result store")
    p.add_argument("spec", help="experiment JSON file")
    p.add_argument("--output-dir", help=f"result store directory (default: ${OUTPUT_DIR_ENV})")
    p.add_argument("--workers", type=int, default=1, help="process pool size for the sweep")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("verify", help="run the randomized property suite")
    p.add_argument("--instances", type=int, default=500, help="random instances per check")
    p.add_argument("--seed", type=int, default=0, help="seed for the property sweep")
    p.add_argument(
        "--sessions", type=int, default=100_000, help="sessions for the Monte Carlo law check"
    )
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("plot-data", help="emit scatter/trajectory CSVs from a result store")
    p.add_argument("store", help="result store directory written by simulate")
    p.set_defaults(func=_cmd_plot_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
