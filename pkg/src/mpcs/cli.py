"""Command line entry point: ``mpcs run | sample | list``."""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .configuration import sample_batch, write_csv
from .errors import ConfigError, MpcsError
from .experiments import REGISTRY, run_suite
from .montecarlo import RngSpec
from .report import build_report, dumps, write_csv_dir, write_report

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mpcs", description="Validation suite for marked Poisson configuration spaces.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run experiments and write a report")
    run.add_argument("--config", required=True, help="JSON config file")
    run.add_argument("--experiment", action="append", help="experiment name (repeatable); default: all")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", help="report JSON path (default: stdout)")
    run.add_argument("--csv", help="directory for per-experiment CSV files")
    run.add_argument("--quiet", action="store_true", help="no progress lines on stderr")

    smp = sub.add_parser("sample", help="sample configurations to CSV")
    smp.add_argument("--config", required=True)
    smp.add_argument("--n", type=int, required=True, help="number of configurations")
    smp.add_argument("--out", required=True)
    smp.add_argument("--seed", type=int)

    sub.add_parser("list", help="list experiments")
    return p


def _run(args) -> int:
    cfg = load_config(args.config, seed=args.seed, workers=args.workers)

    def progress(o):
        if not args.quiet:
            print(f"{o.name:15s} {'pass' if o.passed else 'FAIL'}", file=sys.stderr)

    outcomes = run_suite(cfg, args.experiment, progress)
    report = build_report(cfg, outcomes)
    if args.out:
        write_report(args.out, report)
    else:
        sys.stdout.write(dumps(report))
    if args.csv:
        write_csv_dir(args.csv, outcomes)
    return EXIT_PASS if report["verdict"] == "pass" else EXIT_FAIL


def _sample(args) -> int:
    if args.n < 1:
        raise ConfigError("--n must be positive")
    cfg = load_config(args.config, seed=args.seed)
    mixing = cfg.mixing_law() if cfg.measure == "mixed" else None
    batch = sample_batch(cfg.build_model(), cfg.window_box(), RngSpec(cfg.seed).generator(0), args.n, mixing)
    write_csv(args.out, batch.configs(), cfg.model.dim)
    return EXIT_PASS


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        if args.command == "list":
            for e in REGISTRY:
                print(f"{e.name:15s} {e.anchor}")
            return EXIT_PASS
        if args.command == "run":
            return _run(args)
        return _sample(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MpcsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
