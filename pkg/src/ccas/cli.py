"""Command-line front end.

    ccas run --scenario ho-2 --out out/ [--format csv|json] [--iter-max N]
             [--beta B] [--steps T] [--seed S] [-v]
    ccas --list-scenarios

Exit status: 0 on success, 1 for configuration errors (unreadable or
invalid scenario, bad overrides), 2 when the solver fails mid-run. Usage
errors exit through argparse with status 2.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ccas import __version__
from ccas.scenario import ConfigError, builtin_names, load_scenario
from ccas.sim import SimulationError, format_summary, run, summary, write_log

logger = logging.getLogger("ccas")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


@dataclass(frozen=True)
class CliOptions:
    command: str | None
    scenario: str | None = None
    out_dir: Path = Path(".")
    format: str = "csv"
    iter_max: int | None = None
    beta: float | None = None
    seed: int = 0
    steps: int | None = None
    list_scenarios: bool = False
    verbose: bool = False


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccas", description="Collaborative ship collision avoidance simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--list-scenarios", action="store_true", help="print the built-in scenario names and exit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command")
    r = sub.add_parser("run", help="run a scenario and write its log")
    r.add_argument("--scenario", required=True, help="scenario JSON file or built-in name")
    r.add_argument("--out", dest="out_dir", type=Path, default=Path("."), help="output directory")
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--iter-max", type=int, help="override the NADMM iteration count")
    r.add_argument("--beta", type=float, help="override the NADMM penalty")
    r.add_argument("--steps", type=int, help="override the number of control periods")
    r.add_argument("--seed", type=int, default=0, help="accepted for interface stability; runs are deterministic")
    r.add_argument("-v", "--verbose", action="store_true", dest="run_verbose", help=argparse.SUPPRESS)
    return p


def parse_args(argv: Sequence[str] | None = None) -> CliOptions:
    p = _parser()
    ns = p.parse_args(argv)
    verbose = ns.verbose or getattr(ns, "run_verbose", False)
    if ns.list_scenarios:
        return CliOptions(None, list_scenarios=True, verbose=verbose)
    if ns.command is None:
        p.error("a command is required (or --list-scenarios)")
    return CliOptions(ns.command, ns.scenario, ns.out_dir, ns.format, ns.iter_max, ns.beta, ns.seed, ns.steps,
                      False, verbose)


def main(opts: CliOptions) -> int:
    logging.basicConfig(level=logging.INFO if opts.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if opts.list_scenarios:
        for name in builtin_names():
            print(name)
        return EXIT_OK

    try:
        cfg = load_scenario(opts.scenario).with_overrides(iter_max=opts.iter_max, beta=opts.beta,
                                                          total_steps=opts.steps)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    logger.info("scenario %s: %d ships, %d steps", cfg.name, len(cfg.ships), cfg.total_steps)

    def progress(done: int, total: int) -> None:
        if done % 20 == 0 or done == total:
            logger.info("step %d/%d", done, total)

    try:
        log = run(cfg, progress)
    except SimulationError as e:
        print(f"solver failure: {e}", file=sys.stderr)
        partial = Path(opts.out_dir) / f"{cfg.name}.partial.{opts.format}"
        try:
            write_log(e.log, partial, opts.format)
            print(f"partial log written to {partial}", file=sys.stderr)
        except OSError:
            pass
        return EXIT_SOLVER

    try:
        path = write_log(log, Path(opts.out_dir) / f"{cfg.name}.{opts.format}", opts.format)
    except OSError as e:
        print(f"error: cannot write log: {e}", file=sys.stderr)
        return EXIT_CONFIG
    logger.info("log written to %s", path)
    print(format_summary(summary(log)), end="")
    return EXIT_OK


def entry(argv: Sequence[str] | None = None) -> int:
    return main(parse_args(argv))


if __name__ == "__main__":
    sys.exit(entry())
