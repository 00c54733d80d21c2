"""Command-line entry point: ``aggsim run`` and ``aggsim sweep``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .core import ConfigError
from .experiments import fmt_summary, parse_config, parse_value, run_experiment, sweep, write_results

log = logging.getLogger("aggsim")

# flag -> config key
RUN_FLAGS = {
    "--protocol": "protocol",
    "--nodes": "n",
    "--degree": "avg_degree",
    "--trials": "trials",
    "--seed": "base_seed",
    "--mode": "mode",
    "--loss-prob": "loss_prob",
    "--fifo": "fifo",
    "--crash-spec": "crash_spec",
    "--eps": "eps",
    "--budget": "budget",
    "--out": "out",
    "--topology-out": "topology_out",
    "--workers": "workers",
    "--aggregate": "aggregate",
    "--drg-leader-prob": "drg_leader_prob",
    "--ppg-timeout": "ppg_timeout",
    "--oracle-loss-recovery": "oracle_loss_recovery",
    "--early-stop": "early_stop",
    "--stall-stop": "stall_stop",
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    for flag, key in RUN_FLAGS.items():
        p.add_argument(flag, dest=key, default=None, metavar=key.upper())
    p.add_argument("-v", "--verbose", action="store_true")


def _load(args):
    text = Path(args.config).read_text() if args.config else ""
    overrides = {key: getattr(args, key) for key in RUN_FLAGS.values()}
    return parse_config(text, overrides)


def cmd_run(args) -> int:
    cfg = _load(args)
    results, summary = run_experiment(cfg)
    curves, summ = write_results(cfg, results, summary, cfg.out)
    print(fmt_summary(summary))
    print(f"wrote {curves} and {summ}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    grid = {}
    for item in args.grid:
        key, _, values = item.partition("=")
        if not values:
            raise ConfigError(f"--grid: expected key=v1,v2,..., got {item!r}")
        grid[key.strip()] = [parse_value(key.strip(), v) for v in values.split(",")]
    for point, rows in sweep(cfg, grid):
        print(" ".join(f"{k}={v}" for k, v in point.items()))
        print(fmt_summary(rows))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="aggsim", description="Averaging-aggregation dependability simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run trials and write curves.csv / summary.csv")
    _add_run_flags(run)
    run.set_defaults(func=cmd_run)
    sw = sub.add_parser("sweep", help="summaries over a parameter grid (e.g. drg_leader_prob)")
    _add_run_flags(sw)
    sw.add_argument("--grid", action="append", default=[], help="key=v1,v2,... (repeatable)")
    sw.set_defaults(func=cmd_sweep)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"aggsim: configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"aggsim: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
