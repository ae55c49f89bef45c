"""``roughpde <experiment> --config <path> [--seed U64] [--out DIR]``."""
from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, load_config
from .errors import RoughPDEError
from .harness import run_experiment, write_outcome


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roughpde", description="Run a rough-PDE experiment.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="flat 'section.key = value' file")
    p.add_argument("--seed", type=_u64, default=None, help="overrides run.seed")
    p.add_argument("--out", default=None, help="output directory (default: run.out or ./out)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.experiment, seed=args.seed, out_dir=args.out)
        outcome = run_experiment(cfg)
        out = write_outcome(outcome, cfg.out_dir)
    except RoughPDEError as exc:
        print(f"roughpde: error: {exc}", file=sys.stderr)
        return 2
    for line in outcome.verdict_lines():
        print(line)
    print(f"wrote {out / 'results.csv'}", file=sys.stderr)
    return 0 if outcome.passed else 1


if __name__ == "__main__":
    sys.exit(main())
