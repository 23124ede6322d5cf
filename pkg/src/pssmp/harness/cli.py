"""Command line entry point: ``pssmp <experiment> --config FILE [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import os
import sys

from .config import EXPERIMENTS, ConfigError, load_config
from .experiments import run

OUT_ENV = "PSSMP_OUT"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pssmp", description=__doc__)
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="experiment configuration file")
    ap.add_argument("--seed", type=int, help="override the configured master seed")
    ap.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./pssmp-out)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as exc:
        print(f"pssmp: {exc}", file=sys.stderr)
        return 2
    cfg.experiment = args.experiment
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            print("pssmp: --seed must fit in 64 bits", file=sys.stderr)
            return 2
        cfg.seed = args.seed
    out = args.out or os.environ.get(OUT_ENV) or "pssmp-out"
    try:
        report = run(cfg, out)
    except RuntimeError as exc:
        print(f"pssmp: {exc}", file=sys.stderr)
        return 1
    for line in report.summary_lines():
        print(line)
    print(f"{'ALL PASS' if report.passed else 'FAILED'}  ({report.wall_time:.1f}s, {out})")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
