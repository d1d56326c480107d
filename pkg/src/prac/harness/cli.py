"""``prac`` command line.

Exit codes: 0 success, 1 usage error, 2 data error (bad or missing input,
malformed artifact, failed verification), 3 numeric error (non-finite values
during training).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..errors import DegenerateRunError, FormatError, InputError, NumericError, ShapeError
from .config import ExperimentConfig
from .report import report
from .runner import run_experiment, run_transfer
from .verify import verify

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, action="append",
                        help="seed to run (repeatable); overrides the config's seed list")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--threads", type=int, default=1, help="concurrent (method, seed) runs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="prac", description="PrAC lottery-ticket experiments")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="{run,transfer,report,verify}")
    sub.required = True
    r = sub.add_parser("run", parents=[common], help="run an experiment config")
    r.add_argument("config", type=Path)
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    t = sub.add_parser("transfer", parents=[common], help="replay a run's PrAC sets on another architecture")
    t.add_argument("--from", dest="source", type=Path, required=True, help="source PrAC run directory")
    t.add_argument("--arch", required=True)
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    rp = sub.add_parser("report", parents=[common], help="write CSV/SVG reports")
    rp.add_argument("dirs", type=Path, nargs="+")
    v = sub.add_parser("verify", parents=[common], help="check invariants of saved artifacts")
    v.add_argument("dir", type=Path)
    return p


def _overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise InputError(f"--set expects KEY=VALUE, got {pair!r}")
        k, v = pair.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _dispatch(args) -> int:
    if args.command == "run":
        cfg = ExperimentConfig.load(args.config)
        if args.set:
            cfg = ExperimentConfig.from_dict({**cfg.values, **_overrides(args.set)})
        exp = run_experiment(cfg, out=args.out, threads=args.threads, seeds=args.seed)
        print(exp)
        return EXIT_OK
    if args.command == "transfer":
        seeds = args.seed or [None]
        for s in seeds:
            print(run_transfer(args.source, args.arch, out=args.out if len(seeds) == 1 else None,
                               seed=s, overrides=_overrides(args.set)))
        return EXIT_OK
    if args.command == "report":
        for name, path in report(args.dirs, args.out).items():
            print(f"{name}: {path}")
        return EXIT_OK
    if args.command == "verify":
        results = verify([args.dir])
        bad = 0
        for run, problems in results.items():
            status = "ok" if not problems else f"{len(problems)} problem(s)"
            print(f"{run}: {status}")
            for msg in problems:
                print(f"  {msg}")
            bad += bool(problems)
        return EXIT_DATA if bad else EXIT_OK
    raise AssertionError(args.command)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except NumericError as exc:
        print(f"prac: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, InputError, ShapeError, DegenerateRunError, OSError) as exc:
        print(f"prac: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
