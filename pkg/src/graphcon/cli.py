"""Command-line entry point: ``graphcon <command> [--config PATH] [--seed U64] [--out DIR] [--jobs N]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import experiments as X
from .artifacts import ConfigError, load_config
from .checks import CHECKS

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

COMMANDS = ("gen-grid", "gen-sbm", "energy-profile", "checks", "train", "depth-sweep", "sensitivity-sweep")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("--jobs must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment config")
    common.add_argument("--seed", type=_u64, help="overrides the config seed")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--jobs", type=_positive, default=1, help="parallel sweep cells")
    p = argparse.ArgumentParser(prog="graphcon", description="Graph-coupled oscillator networks.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "checks":
            sp.add_argument("names", nargs="*", metavar="CHECK",
                            help=f"any of: {', '.join(CHECKS)}, or 'all'")
    return p


def _setup_logging() -> None:
    level = os.environ.get("GRAPHCON_LOG", "error").lower()
    if level not in LOG_LEVELS:
        raise ConfigError(f"GRAPHCON_LOG must be one of {sorted(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        cfg = load_config(args.config)
    except (ConfigError, OSError) as e:
        print(f"graphcon: {e}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg["seed"] = args.seed
    os.makedirs(args.out, exist_ok=True)
    cmd = args.command
    try:
        if cmd == "gen-grid":
            X.cmd_gen_grid(cfg, args.out)
        elif cmd == "gen-sbm":
            X.cmd_gen_sbm(cfg, args.out)
        elif cmd == "energy-profile":
            X.cmd_energy_profile(cfg, args.out)
        elif cmd == "checks":
            names = list(CHECKS) if args.names == ["all"] else args.names
            status, results = X.cmd_checks(names, cfg, args.out)
            for r in results:
                print(f"{r['name']}: {'PASS' if r['pass'] else 'FAIL'}")
            return status
        elif cmd == "train":
            s = X.cmd_train(cfg, args.out)
            print(f"best epoch {s['best_epoch']}: val {s['val_metric']:.4f} test {s['test_metric']:.4f}")
        elif cmd == "depth-sweep":
            X.cmd_depth_sweep(cfg, args.out, args.jobs)
        elif cmd == "sensitivity-sweep":
            X.cmd_sensitivity_sweep(cfg, args.out, args.jobs)
    except (KeyError, ValueError) as e:
        print(f"graphcon: {e.args[0] if e.args else e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
