"""Command-line entry point: one subcommand per stage plus ``run`` for several."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields

from momentrisk.config import STAGES, RunConfig, resolve_config
from momentrisk.errors import MomentRiskError
from momentrisk.pipeline import run_pipeline

log = logging.getLogger("momentrisk")

_HELP = {
    "simulate": "write synthetic bars, risk-free, controls and truth files",
    "ingest": "grid bars to K intervals and build daily/weekly excess returns",
    "moments": "daily and weekly realized moments",
    "decompose": "short/long horizon components of every moment",
    "factors": "SFMM/SHSM factor matrices and factor correlations",
    "sort": "rolling exposure sorts into quantile portfolios",
    "crosssection": "static two-pass Fama-MacBeth premia",
    "tvp": "time-varying (QBLL) Fama-MacBeth premia",
    "report": "render text tables from sort and premia files",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("-v", "--verbose", action="store_true")
    g = p.add_argument_group("configuration keys (override file and environment)")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        g.add_argument(flag, dest=f.name, default=None, metavar=f.type.upper(),
                       help=f"default {f.default!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momentrisk",
                                     description="Realized-moment risk factors and premia.")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        _add_config_flags(sub.add_parser(stage, help=_HELP[stage]))
    run = sub.add_parser("run", help="run several stages in dependency order")
    run.add_argument("--stages", default=",".join(STAGES),
                     help="comma-separated stage list (default: all)")
    _add_config_flags(run)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    try:
        cfg = resolve_config(args.config, flags=flags)
        if args.command == "run":
            stages = [s.strip() for s in args.stages.split(",") if s.strip()]
        else:
            stages = [args.command]
        run_pipeline(cfg, stages)
    except MomentRiskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
