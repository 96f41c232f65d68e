"""Command-line entry point: ``deimfs <experiment> [--config FILE] [--override k=v ...]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import (ConfigError, DegenerateBasisError, IllConditionedIntersectionError,
                     SingularCoreError)
from .experiments import RUNNERS, load_config
from .fom import BudgetExceededError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("deimfs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deimfs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "cross-compare": "DEIM-FS, iterative DEIM-FS, FSTD and HOSVD on the toy tensors",
        "fokker-planck": "4-D Fokker-Planck run with moment report",
        "advection": "4-D nonlinear advection against a dense reference",
        "fom": "dense full-order reference trajectory",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="key=value text file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.command, args.config, args.override, seed=args.seed, out_dir=args.out_dir)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("resolved config: %s", cfg)
    try:
        files = RUNNERS[args.command](cfg)
    except (ConfigError, BudgetExceededError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularCoreError, IllConditionedIntersectionError, DegenerateBasisError,
            ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for name, path in files.items():
        print(f"{name}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
