"""Command line: ``rofsim run <experiment> ...`` and ``rofsim list``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import ConfigError, parse_config
from .experiments import EXPERIMENTS, get_experiment
from .runner import emit_results, resolve_config, run_experiment


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rofsim", description="1-bit radio-over-fiber D-MIMO link simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="print registered experiments")
    run = sub.add_parser("run", help="run one experiment sweep")
    run.add_argument("experiment")
    run.add_argument("--config", help="YAML scenario file layered over the experiment defaults")
    run.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--repeats", type=_positive)
    run.add_argument("--workers", type=_positive, default=1)
    run.add_argument("--constellations", action="store_true", help="also dump equalized symbols")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        width = max(map(len, EXPERIMENTS))
        for name, exp in EXPERIMENTS.items():
            print(f"{name:<{width}}  {exp.anchor}")
        return 0
    try:
        exp = get_experiment(args.experiment)
        base = resolve_config(exp)
        cfg = parse_config(args.config, base) if args.config else base
        over = {"output_dir": args.out}
        if args.seed is not None:
            over["master_seed"] = args.seed
        if args.repeats is not None:
            over["repeats"] = args.repeats
        cfg = dataclasses.replace(cfg, **over)
        result = run_experiment(exp.name, cfg, args.workers)
        files = emit_results(result, args.out, cfg, args.constellations or cfg.constellation_dump)
    except (ConfigError, KeyError, ValueError, OSError, RuntimeError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"rofsim: error: {msg}", file=sys.stderr)
        return 2
    for f in files[:2]:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
