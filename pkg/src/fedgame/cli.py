"""Command-line entry point.

Subcommands: run, sweep-alpha, verify, nash. Exit codes: 0 ok, 1 usage,
2 validation, 3 verification failure, 4 runtime abort. The output directory
defaults to the FEDGAME_OUT environment variable when --out is omitted.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .game import GridSpec, best_response_dynamics, nash_brute_force, payoff, \
    potential_corrected, MAX_ENUMERATION
from .runner import (DEFAULT_ALPHA_SWEEP, build_precision_source, cmd_run,
                     cmd_sweep_alpha, sample_orgs)
from .rng import substream
from .verify import run_verify

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_VERIFY = 3
EXIT_RUNTIME = 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="fedgame",
                     description="Contribution-game simulator and trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train the requested modes and persist artifacts")
    run.add_argument("--config", help="JSON config path (omit for defaults)")
    run.add_argument("--out", help="output directory (or FEDGAME_OUT)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--mode", default="MPGD",
                     help="comma-separated: MPGD, A2C, Greedy, WPR")

    sweep = sub.add_parser("sweep-alpha", help="sweep the initial intensity alpha0")
    sweep.add_argument("--config", help="JSON config path")
    sweep.add_argument("--out", help="output directory (or FEDGAME_OUT)")
    sweep.add_argument("--alpha0", default=",".join(str(a) for a in DEFAULT_ALPHA_SWEEP),
                       help="comma-separated alpha0 values")
    sweep.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    sweep.add_argument("--mode", default="MPGD")

    ver = sub.add_parser("verify", help="run the cross-module property suites")
    ver.add_argument("--level", choices=("fast", "full"), default="fast")

    nash = sub.add_parser("nash", help="enumerate grid equilibria for a config")
    nash.add_argument("--config", help="JSON config path")
    nash.add_argument("--grid", type=int, default=11, help="grid points per org")
    nash.add_argument("--seed", type=int, help="override the config seed")
    return parser


def _load(config_path) -> ExperimentConfig:
    if config_path is None:
        return ExperimentConfig()
    return load_config(config_path)


def _out_dir(arg) -> str:
    out = arg or os.environ.get("FEDGAME_OUT")
    if not out:
        raise _UsageError("an output directory is required "
                          "(--out or FEDGAME_OUT)")
    return out


def _cmd_run(args) -> int:
    cfg = _load(args.config)
    modes = [m for m in args.mode.split(",") if m]
    run_dir = cmd_run(cfg, _out_dir(args.out), modes=modes, seed=args.seed)
    print(f"artifacts written to {run_dir}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load(args.config)
    alphas = [float(a) for a in args.alpha0.split(",") if a]
    seeds = [int(s) for s in args.seeds.split(",") if s]
    sweep_dir = cmd_sweep_alpha(cfg, _out_dir(args.out), alpha0_list=alphas,
                                seeds=seeds, mode=args.mode)
    print(f"sweep written to {sweep_dir}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    ok, results = run_verify(args.level)
    for r in results:
        print(f"[{r.status}] {r.name}: {r.detail}")
    return EXIT_OK if ok else EXIT_VERIFY


def _cmd_nash(args) -> int:
    cfg = _load(args.config)
    if cfg.precision.kind == "micro_fl":
        raise ConfigError("nash enumeration needs an analytic precision model")
    seed = cfg.seed if args.seed is None else args.seed
    grid = GridSpec(points=args.grid)
    if grid.points ** cfg.num_orgs > MAX_ENUMERATION:
        raise ConfigError(
            f"enumeration budget exceeded: {grid.points}^{cfg.num_orgs}; "
            "use a smaller --grid or fewer orgs")
    orgs = sample_orgs(cfg, seed)
    source = build_precision_source(cfg, orgs)
    alpha = cfg.alpha.alpha0
    equilibria = nash_brute_force(orgs, alpha, source.observe, grid)
    print(f"{len(equilibria)} grid equilibria (K={grid.points}, "
          f"N={cfg.num_orgs}, alpha={alpha}):")
    best_pot, best_profile = -np.inf, None
    for eq in equilibria:
        payoffs = [payoff(n, eq.array, source.observe(eq.array), orgs, alpha).total
                   for n in range(cfg.num_orgs)]
        pot = potential_corrected(eq.array, orgs, alpha, source.observe(eq.array))
        if pot > best_pot:
            best_pot, best_profile = pot, eq
        print(f"  d = {tuple(round(v, 4) for v in eq.contributions)}  "
              f"payoffs = {[round(u, 3) for u in payoffs]}  "
              f"potential = {pot:.6f}")
    if best_profile is not None:
        print(f"potential-maximizing equilibrium: "
              f"{tuple(round(v, 4) for v in best_profile.contributions)}")
    start = substream(seed, "nash-start").uniform(0, 1, cfg.num_orgs)
    trail = best_response_dynamics(start, orgs, alpha, source.observe, grid,
                                   max_rounds=10 * grid.points * cfg.num_orgs)
    print(f"best-response dynamics from a random start ({len(trail)} states):")
    for prof in trail:
        print(f"  {tuple(round(v, 4) for v in prof.contributions)}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep-alpha":
            return _cmd_sweep(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "nash":
            return _cmd_nash(args)
        raise _UsageError(f"unknown command {args.command!r}")
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # runtime abort, already logged where possible
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
