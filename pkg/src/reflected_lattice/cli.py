"""Command line entry point: ``reflected-lattice run|compare|list-presets``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reflected-lattice",
                                 description="Run and compare lattice reflection experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config (JSON)")
    r.add_argument("config")
    c = sub.add_parser("compare", help="diff two run directories")
    c.add_argument("dir1")
    c.add_argument("dir2")
    sub.add_parser("list-presets", help="print available presets")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        try:
            cfg = harness.ExperimentConfig.load(args.config)
        except harness.ExperimentConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return harness.EXIT_CONFIG
        code, table = harness.execute(cfg)
        for msg in table.failures:
            print(f"FAILED {msg}", file=sys.stderr)
        print(f"wrote {cfg.output_dir / 'results.csv'} ({len(table.rows)} rows)")
        return code
    if args.command == "compare":
        try:
            report = harness.compare_runs(args.dir1, args.dir2)
        except (harness.SchemaMismatch, OSError) as exc:
            print(f"cannot compare: {exc}", file=sys.stderr)
            return harness.EXIT_CONFIG
        for line in report.lines():
            print(line)
        if not report.entries:
            print("runs identical")
        return harness.compare_exit_code(report)
    print(json.dumps(harness.list_presets(), indent=2))
    return harness.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
