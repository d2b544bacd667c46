"""Command-line entry point: prepare, run, report, gradcheck, weights-audit.

Exit codes: 0 success, 1 one or more grid cells failed, 2 config/data error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .corpus import DataError, ParseError
from .harness import ConfigError, cmd_prepare, cmd_report, cmd_run, cmd_weights_audit, load_config
from .model import gradient_check
from .semantics import EmbeddingFormatError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="said", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log cell progress")
    sub = parser.add_subparsers(dest="command", required=True)

    prepare = sub.add_parser("prepare", help="build split/profile/manifest artifacts")
    prepare.add_argument("--config", required=True)
    prepare.add_argument("--workdir", required=True)
    prepare.add_argument("--set", dest="overrides", action="append", default=[],
                         metavar="SECTION.KEY=VALUE", help="override a config key")

    run = sub.add_parser("run", help="execute the noise/alpha/seed grid")
    run.add_argument("--config", required=True)
    run.add_argument("--workdir", required=True)
    run.add_argument("--report", default=None, help="report path (default workdir/report.json)")
    run.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="SECTION.KEY=VALUE")

    report = sub.add_parser("report", help="emit plot-data CSV tables from a report")
    report.add_argument("--report", required=True)
    report.add_argument("--out", required=True, help="output directory for CSV tables")

    gradcheck = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradients")
    gradcheck.add_argument("--points", type=int, default=100)
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--tolerance", type=float, default=1e-4)

    audit = sub.add_parser("weights-audit", help="dump per-sample similarity and weight")
    audit.add_argument("--config", required=True)
    audit.add_argument("--workdir", required=True)
    audit.add_argument("--out", required=True)
    audit.add_argument("--noise", type=float, default=0.0)
    audit.add_argument("--noise-seed", type=int, default=0)
    audit.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "prepare":
            cfg = load_config(args.config, args.overrides)
            stats = cmd_prepare(cfg, args.workdir)
            print(f"prepared {args.workdir}: {stats['n_positives']} positives, "
                  f"{stats['n_users']} users, {stats['n_items']} items")
            return 0
        if args.command == "run":
            cfg = load_config(args.config, args.overrides)
            report, failures = cmd_run(cfg, args.workdir, args.report)
            n_cells = len(report["cells"])
            print(f"ran {n_cells} cells ({failures} failed); report config hash {report['config_hash']}")
            return 1 if failures else 0
        if args.command == "report":
            written = cmd_report(args.report, args.out)
            for path in written:
                print(path)
            return 0
        if args.command == "gradcheck":
            worst = gradient_check(n_points=args.points, seed=args.seed)
            ok = worst < args.tolerance
            print(f"max relative gradient error: {worst:.3e} "
                  f"({'OK' if ok else 'FAIL'} at tolerance {args.tolerance:g})")
            return 0 if ok else 1
        if args.command == "weights-audit":
            cfg = load_config(args.config, args.overrides)
            out = cmd_weights_audit(cfg, args.workdir, args.out, args.noise, args.noise_seed)
            print(out)
            return 0
    except (ConfigError, ParseError, DataError, EmbeddingFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
