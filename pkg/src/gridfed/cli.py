"""Command-line entry point: ``gridfed simulate | verify | report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import fedlearn
from .simulate import (
    FORMATS,
    REFERENCE_TABLES,
    RUN_TABLES,
    RunConfig,
    SimulationError,
    report,
    simulate,
    verify,
)

EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridfed", description="Federated smart-grid simulator with an energy ledger")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a full simulation")
    sim.add_argument("--config", type=Path, help="scenario JSON (default: bundled survey region)")
    sim.add_argument("--fed-config", type=Path, help="JSON with federated training parameters")
    sim.add_argument("--readings", type=Path, help="ingest readings CSV instead of generating")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", type=Path, required=True)
    sim.add_argument("--months", type=int, default=12)
    sim.add_argument("--format", action="append", choices=FORMATS, dest="formats",
                     help="report format; repeat for several (default: all)")

    ver = sub.add_parser("verify", help="check a ledger file's hash chain")
    ver.add_argument("ledger", type=Path)

    rep = sub.add_parser("report", help="emit one table")
    rep.add_argument("table", help=f"one of: {', '.join(REFERENCE_TABLES + RUN_TABLES)}")
    rep.add_argument("--out", type=Path, help="run directory (required for run tables)")
    rep.add_argument("--format", choices=FORMATS, default="text")
    return parser


def _simulate(args) -> int:
    fed = fedlearn.FedConfig()
    if args.fed_config is not None:
        fed = fedlearn.FedConfig.from_dict(json.loads(args.fed_config.read_text()))
    cfg = RunConfig(
        out_dir=args.out,
        scenario_path=args.config,
        fed=fed,
        months=args.months,
        seed=args.seed,
        formats=tuple(args.formats or FORMATS),
        readings_path=args.readings,
    )
    summary = simulate(cfg)
    print(f"blocks: {summary.blocks}")
    print(f"ledger head: {summary.ledger_head}")
    print(f"surplus alerts: {len(summary.alerts)}")
    print(f"simulated training time: {summary.simulated_seconds:.3f} s")
    print(f"wall clock: {summary.wall_clock_seconds:.3f} s")
    for path in summary.report_paths:
        print(f"wrote {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "verify":
        status = verify(args.ledger)
        if status == 0:
            print(f"{args.ledger}: valid")
        return status
    try:
        if args.command == "simulate":
            return _simulate(args)
        text, _ = report(args.out, args.table, args.format)
        sys.stdout.write(text)
        return 0
    except (SimulationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
