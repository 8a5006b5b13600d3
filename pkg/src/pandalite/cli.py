"""Command line entry point: ``pandalite train|eval|aggregate|plot-data``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

from .agents import Agent
from .envapi import ENV_IDS, make
from .harness import (EVAL_SEED_OFFSET, RunConfig, aggregate, evaluate, plot_data, train,
                      write_curve)
from .nn import read_manifest


def _env_name(name: str) -> str:
    # accept the dense spelling too, e.g. PandaPushDense-v1
    base = name.replace("Dense", "")
    if base not in ENV_IDS:
        raise argparse.ArgumentTypeError(f"unknown environment {name!r}; choose from {', '.join(ENV_IDS)}")
    return name


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pandalite", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one agent and write metrics, manifest and checkpoint")
    p.add_argument("--env", type=_env_name, required=True)
    p.add_argument("--algo", choices=["ddpg", "td3", "sac"], required=True)
    p.add_argument("--dense", action="store_true", help="dense reward variant")
    p.add_argument("--no-her", dest="her", action="store_false")
    p.add_argument("--no-clipped-double-q", dest="clipped_double_q", action="store_false",
                   default=None)
    p.add_argument("--steps", type=int, required=True, help="total env steps over all workers")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=8)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--n-batches", type=int, default=40, help="updates after each worker episode")
    p.add_argument("--simulated-time", action="store_true",
                   help="write steps x 40 ms instead of wall time, for byte-reproducible metrics")

    p = sub.add_parser("eval", help="evaluate a checkpoint with the deterministic policy")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=80)
    p.add_argument("--env", type=_env_name, help="defaults to the environment stored in the checkpoint")
    p.add_argument("--seed", type=int, default=EVAL_SEED_OFFSET)

    p = sub.add_parser("aggregate", help="median and quartiles across seeds")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", help="also write the curve file here")

    p = sub.add_parser("plot-data", help="write per-task curve files grouped by algorithm variant")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", default="plot-data")
    return parser


def _train(args) -> int:
    config = RunConfig(env=args.env.replace("Dense", ""), dense=args.dense or "Dense" in args.env,
                       algo=args.algo, her=args.her, clipped_double_q=args.clipped_double_q,
                       n_workers=args.workers, total_steps=args.steps, n_batches=args.n_batches,
                       seed=args.seed, out_dir=args.out, wall_clock=not args.simulated_time)
    result = train(config)
    last = result.metrics[-1]
    print(f"{config.env} {config.algo} seed={config.seed}: success {last.success_rate:.3f} "
          f"after {last.total_env_steps} steps -> {args.out}")
    return 0


def _eval(args) -> int:
    meta = read_manifest(args.checkpoint)["meta"]
    extra = meta.get("extra", {})
    env_id = args.env or extra.get("env")
    if env_id is None:
        print("checkpoint does not record its environment; pass --env", file=sys.stderr)
        return 2
    env = make(env_id, dense=extra.get("dense", False))
    agent = Agent.load(args.checkpoint)
    rate = evaluate(agent, env, args.episodes, seed=args.seed)
    print(json.dumps({"env": env_id, "episodes": args.episodes, "success_rate": rate}))
    return 0


def _aggregate(args) -> int:
    agg = aggregate(args.runs)
    print("total_env_steps,median,lowq,highq")
    for row in zip(agg["total_env_steps"], agg["median"], agg["lowq"], agg["highq"]):
        print(",".join(str(v) for v in row))
    if args.out:
        write_curve(args.out, agg)
    return 0


def _plot_data(args) -> int:
    for path in plot_data(args.runs, args.out):
        print(path)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    handler = {"train": _train, "eval": _eval, "aggregate": _aggregate,
               "plot-data": _plot_data}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
