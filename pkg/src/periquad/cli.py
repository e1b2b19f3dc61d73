"""Command-line entry point: run one configured experiment end to end."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiments import evaluate_summary, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="periquad",
        description="Meshfree quadrature and bond-based peridynamic experiments")
    parser.add_argument("--config", type=Path, help="YAML run configuration")
    parser.add_argument("--out", type=Path, default=None,
                        help="output directory (default: alongside the config)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for weight generation "
                             "(results are thread-count independent)")
    parser.add_argument("--full", action="store_true",
                        help="enable the full-scale variant of experiments that "
                             "declare one (not desk-scale)")
    parser.add_argument("--recheck", type=Path, default=None, metavar="DIR",
                        help="re-evaluate the verdict of an existing results directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.recheck is not None:
        passed, lines = evaluate_summary(args.recheck)
        for line in lines:
            print(line)
        print(f"{'PASS' if passed else 'FAIL'} {args.recheck}")
        return 0 if passed else 1
    if args.config is None:
        print("error: --config or --recheck is required", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out
    if out_dir is None:
        out_dir = Path(cfg["output"]) if cfg["output"] else \
            args.config.parent / f"out_{cfg.experiment}"
    summary = run_experiment(cfg, out_dir, threads=max(1, args.threads),
                             full=args.full)
    passed, lines = evaluate_summary(out_dir)
    for line in lines:
        print(line)
    print(f"{'PASS' if passed else 'FAIL'} {cfg.experiment} -> {out_dir}")
    assert passed == summary["passed"]
    return 0 if passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
