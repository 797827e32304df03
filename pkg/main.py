#!/usr/bin/env python3
"""
GUMG engine command-line entry point.

    python main.py run --config data/configs/imitation_grid.json --out-dir out/imitation
    python main.py eval --game game.json --policy out/imitation/policy.csv --utility utility.json
    python main.py sweep --config data/configs/small_team.json --axis T --values 100 400 1600
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from cli.commands import SWEEP_AXES, cmd_eval, cmd_run, cmd_sweep
from models.learner import InnerSolverConfig

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def configure_logging() -> None:
    level_name = os.getenv("GUMG_LOG", "info").lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(level_name, logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s'
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gumg", description="Policy-gradient learning in general-utility Markov games")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run the learner from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--out-dir", default="out")
    run.add_argument("--seed", type=int)
    run.add_argument("--mode", choices=["exact", "onpolicy", "generative"])
    run.add_argument("--T", type=int)
    run.add_argument("--threads", type=int)

    evaluate = sub.add_parser("eval", help="Report NE gap and stationarity of a policy file")
    evaluate.add_argument("--game", required=True, help="Game file, builder block or run config")
    evaluate.add_argument("--policy", required=True, help="CSV with rows agent,state,action,prob")
    evaluate.add_argument("--utility", required=True, help="Utility blocks or a run config")
    evaluate.add_argument("--eta", type=float, default=0.1)
    evaluate.add_argument("--alpha", type=float, default=0.0)
    evaluate.add_argument("--inner-stepsize", type=float, default=0.05)
    evaluate.add_argument("--inner-max-iter", type=int, default=5000)
    evaluate.add_argument("--inner-tol", type=float, default=1e-6)
    evaluate.add_argument("--out", help="Also write the report to this file")

    sweep = sub.add_parser("sweep", help="Run one config over several values of one parameter")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep.add_argument("--values", required=True, type=float, nargs="+")
    sweep.add_argument("--out-dir", default="out")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--mode", choices=["exact", "onpolicy", "generative"])
    sweep.add_argument("--threads", type=int)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    configure_logging()
    args = build_parser().parse_args(argv)

    if args.command == "run":
        return cmd_run(args.config, args.out_dir, args.seed, args.mode, args.T, args.threads)
    if args.command == "eval":
        inner = InnerSolverConfig(stepsize=args.inner_stepsize, max_iter=args.inner_max_iter, tol=args.inner_tol)
        return cmd_eval(args.game, args.policy, args.utility, args.eta, args.alpha, inner, args.out)
    return cmd_sweep(args.config, args.axis, args.values, args.out_dir, args.seed, args.mode, args.threads)


if __name__ == "__main__":
    exit_code = main()
    sys.exit(exit_code)
