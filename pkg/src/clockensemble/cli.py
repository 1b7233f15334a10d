"""Command-line entry point: ``clockensemble <command> --config PATH [options]``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from clockensemble.config import ExperimentConfig, bundled_config, load_config
from clockensemble.experiment import (
    bench_runtime,
    run_allan,
    run_experiment,
    run_simulate,
    run_theory,
)
from clockensemble.model import ConfigError


def _load(args) -> ExperimentConfig:
    source = args.config
    path = Path(source)
    if not path.exists() and not source.endswith(".cfg"):
        path = bundled_config(source)
    exp = load_config(path)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.paths is not None:
        if args.paths < 1:
            raise ConfigError(f"--paths must be >= 1, got {args.paths}")
        overrides["paths"] = args.paths
    if args.out is not None:
        overrides["out"] = Path(args.out)
    return replace(exp, **overrides)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clockensemble",
        description="Simulate clock ensembles and compare JST averaging with Kalman filtering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="config file, or a bundled name such as example1")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--paths", type=int, help="Monte-Carlo paths (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        return p

    add("simulate", "write true trajectories with their noises")
    add("compare", "run the configured algorithms and write series and summary CSVs")
    add("allan", "overlapping Allan deviation of both time scales and every clock")
    add("theory", "hypothesis report, L_i criterion and TA moments")

    bench = sub.add_parser("bench", help="runtime of both algorithms versus ensemble size")
    bench.add_argument("--m", type=int, nargs="+", default=[2, 4, 8, 16, 20], help="ensemble sizes")
    bench.add_argument("--repeats", type=int, default=100)
    bench.add_argument("--horizon", type=int, default=200)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", default="results/bench")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "bench":
            if args.repeats < 1 or args.horizon < 1:
                raise ConfigError("--repeats and --horizon must be >= 1")
            bench_runtime(args.m, args.repeats, horizon=args.horizon, out=Path(args.out), seed=args.seed)
            print(Path(args.out) / "bench.csv")
            return 0
        exp = _load(args)
        if args.command == "simulate":
            files = [run_simulate(exp)]
        elif args.command == "compare":
            files = list(run_experiment(exp).values())
        elif args.command == "allan":
            files = [run_allan(exp)]
        else:
            files = list(run_theory(exp).values())
    except (ConfigError, ValueError, OSError) as exc:
        print(f"clockensemble {args.command}: error: {exc}", file=sys.stderr)
        return 2
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
