"""Command-line interface.

    trunc-sa list
    trunc-sa run <scenario> --config FILE [--seed N] [--reps N] [--horizon N] [--out DIR]
    trunc-sa check <conditions> --config FILE [--out DIR]

Exit codes: 0 all declared checks passed, 1 at least one check failed,
2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from .errors import ConfigError
from .scenarios import SCENARIOS, ScenarioConfig, run_checks, run_scenario
from .diagnostics import CONDITIONS


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trunc-sa",
        description="Truncated stochastic approximation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="list available scenarios and conditions")

    run_p = sub.add_parser("run", help="run a Monte Carlo scenario")
    run_p.add_argument("scenario", choices=SCENARIOS)
    run_p.add_argument("--config", required=True, help="JSON configuration file")
    run_p.add_argument("--seed", type=int, help="override the base seed")
    run_p.add_argument("--reps", type=int, help="override the replication count")
    run_p.add_argument("--horizon", type=int, help="override the horizon")
    run_p.add_argument("--out", help="output directory")

    chk_p = sub.add_parser("check", help="evaluate drift conditions on a probe grid")
    chk_p.add_argument("conditions", help=f"comma-separated subset of {','.join(CONDITIONS)}")
    chk_p.add_argument("--config", required=True, help="JSON configuration file")
    chk_p.add_argument("--out", help="output directory for conditions.csv")
    return parser


def _cmd_list() -> int:
    print("scenarios:")
    for s in SCENARIOS:
        print(f"  {s}")
    print("drift conditions:")
    print(f"  {', '.join(CONDITIONS)}")
    return 0


def _cmd_run(args) -> int:
    cfg = ScenarioConfig.from_file(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.reps is not None:
        overrides["replications"] = args.reps
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    if overrides:
        cfg = cfg.replace(**overrides)
    if cfg.scenario != args.scenario:
        raise ConfigError(
            f"config is for scenario '{cfg.scenario}', not '{args.scenario}'"
        )
    report = run_scenario(cfg)
    outdir = args.out or cfg.output_dir or os.path.join("out", cfg.scenario)
    report.write_outputs(outdir)
    print(f"[{cfg.scenario}] outputs written to {outdir}")
    for c in report.checks:
        print(f"[{cfg.scenario}] {c.describe()}")
    if not report.checks:
        print(f"[{cfg.scenario}] no checks declared")
    return 0 if report.passed else 1


def _cmd_check(args) -> int:
    cfg = ScenarioConfig.from_file(args.config)
    conditions = [c.strip() for c in args.conditions.split(",") if c.strip()]
    if not conditions:
        raise ConfigError("no conditions given")
    reports = run_checks(cfg, conditions)
    outdir = args.out or cfg.output_dir or os.path.join("out", "check")
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "conditions.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["condition", "t", "grid_point", "value", "threshold", "ok"])
        for rep in reports:
            for r in rep.rows:
                pt = ";".join(repr(x) for x in r.point)
                w.writerow([r.condition, r.t, pt, repr(r.value), repr(r.threshold), int(r.ok)])
    ok = True
    for rep in reports:
        s = rep.summary()
        print(
            f"[check] {s['condition']}: {s['rows']} rows, "
            f"{s['violations']} violations (t >= {s['t_min']}), "
            f"{s['early_violations']} early -> {'PASS' if s['passed'] else 'FAIL'}"
        )
        ok = ok and s["passed"]
    print(f"[check] table written to {path}")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "list":
            return _cmd_list()
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_check(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
