"""Command line front end.

Subcommands: synth, certify, grid, eval.  Exit codes form a total mapping:

    0  success (synthesis certified / certificate passed / value reported)
    1  certification failure (verification scan exceeded gamma* + theta)
    2  initial or supplied controller not acceptable (ill-posed or barrier)
    3  node or refinement budget exhausted
    4  configuration, input, or parse error
    5  internal numerical failure
"""

import argparse
import logging
import sys

from . import kernels
from .config import load_config
from .controllers import load_controller
from .errors import FrdsynError, NumericalFailureError, ParseError, ConfigError
from .pipeline import certify, evaluate, make_grid, synthesize

log = logging.getLogger("frdsyn")


def _common(parser):
    parser.add_argument("--config", required=True, help="run configuration file")
    parser.add_argument("--out", default=None, help="artifact directory (overrides config)")
    parser.add_argument("--theta", type=float, default=None,
                        help="certification tolerance override")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for per-frequency kernels (0 = all cores)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="frdsyn",
        description="Fixed-structure worst-gain controller synthesis from "
                    "frequency response data",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "synthesize a controller and certify the result"),
        ("certify", "re-certify an exported controller"),
        ("grid", "build the certified optimization grid at x0"),
        ("eval", "evaluate the objective of x0 on the certified grid"),
    ):
        p = sub.add_parser(name, help=help_text)
        _common(p)
        if name == "certify":
            p.add_argument("--controller", required=True,
                           help="controller export file to certify")
    return parser


def _apply_overrides(cfg, args):
    if args.out is not None:
        cfg.out = args.out
    if args.theta is not None:
        cfg.theta = args.theta
        cfg.validate()
    if args.threads is not None:
        cfg.threads = args.threads
    if cfg.threads and cfg.threads > 0 and not kernels.PURE_NUMPY:
        kernels.set_num_threads(cfg.threads)
    return cfg


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except (ParseError, ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 4

    try:
        if args.command == "synth":
            code, outcome = synthesize(cfg, out_dir=cfg.out)
            _print_outcome("synth", outcome)
            return code
        if args.command == "eval":
            code, outcome = evaluate(cfg, out_dir=cfg.out)
            if outcome.f is not None:
                print(f"f = {outcome.f:.17g}")
            _print_outcome("eval", outcome)
            return code
        if args.command == "grid":
            code, outcome = make_grid(cfg, out_dir=cfg.out)
            if outcome.grid is not None:
                print(f"grid nodes: {len(outcome.grid)}")
            _print_outcome("grid", outcome)
            return code
        structure, x = load_controller(args.controller)
        code, outcome = certify(cfg, structure, x, out_dir=cfg.out)
        if outcome.report is not None:
            print(f"gamma_star = {outcome.gamma_star:.17g}")
            print(f"scan_max = {outcome.report.scan_max:.17g}")
            print(f"theta = {cfg.theta:.17g}")
            print("verdict =", "pass" if outcome.certified else "fail")
            if not outcome.certified:
                print(f"violating omega = {outcome.report.violating_omega:.17g}")
        _print_outcome("certify", outcome)
        return code
    except (ParseError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except NumericalFailureError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 5
    except FrdsynError as err:
        print(f"error: {err}", file=sys.stderr)
        return 5


def _print_outcome(cmd, outcome):
    if outcome.status:
        print(f"{cmd}: {outcome.status}")
    if outcome.f is not None and cmd == "synth":
        print(f"f = {outcome.f:.17g}")
        print(f"certified = {outcome.certified}")


if __name__ == "__main__":
    sys.exit(main())
