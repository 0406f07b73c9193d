"""Command line entry point: ``heatreach run CONFIG [--out DIR]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError
from .pipeline import MODES, export, find_amplitude, load_config, rational_roundtrip, run_exact_control

_MODE_ALIAS = {"two": "two_control", "single": "single_control_odd"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatreach", description="exact boundary control of 1D heat equations")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="synthesize controls for a JSON configuration and verify them")
    run.add_argument("config")
    run.add_argument("--out", default="out", help="output directory (default: ./out)")
    run.add_argument("--mode", choices=sorted(_MODE_ALIAS) + list(MODES))
    run.add_argument("--threads", type=int)
    run.add_argument("--find-amplitude", action="store_true",
                     help="bisect the largest data scaling that still passes")
    run.add_argument("--rational-roundtrip-tests", action="store_true",
                     help="run the exact jet round trip on 50 random jets per preset first")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.mode:
        cfg.mode = _MODE_ALIAS.get(args.mode, args.mode)

    if args.rational_roundtrip_tests:
        mism = rational_roundtrip()
        print("rational round trip mismatches: " + json.dumps(mism))
        if any(mism.values()):
            return 1

    if args.find_amplitude:
        res = find_amplitude(cfg, threads=args.threads)
        print(json.dumps(res, indent=2))
        return 0 if res["threshold"] is not None else 1

    rep = run_exact_control(cfg, threads=args.threads)
    export(rep, args.out)
    print(f"status={rep.status} stage={rep.stage} terminal_sup={rep.terminal_sup:.3e} "
          f"tol={rep.tolerance:.1e} passed={rep.passed}")
    if rep.message:
        print(rep.message)
    for b in rep.bounds:
        if not b.satisfied:
            print(f"  unsatisfied: {b.name} ({b.value:.6g} {b.comparison} {b.threshold:.6g})")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
