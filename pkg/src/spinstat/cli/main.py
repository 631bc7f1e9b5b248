"""Command-line entry point: ``spinstat <experiment> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import sys
import time

from ..errors import SpinstatError
from .config import EXPERIMENTS, load_config
from .experiments import run_experiment

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinstat", description="Run one verification experiment.")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed, overrides the config")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        cfg = load_config(args.config, args.experiment)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        table = run_experiment(cfg)
    except (OSError, SpinstatError) as exc:
        print(f"spinstat: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    elapsed = time.perf_counter() - start
    table.write(args.out, elapsed)
    for row in table.failures():
        print(f"spinstat: FAILED {row.identity} [{row.case}]: residual {row.residual!r} > {row.tolerance!r}", file=sys.stderr)
    print(f"{cfg.experiment}: {table.passed} passed, {table.failed} failed, max residual {table.max_residual:.3e}")
    return EXIT_OK if table.failed == 0 else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
