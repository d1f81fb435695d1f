"""Command-line entry point: ``cpsrl run|sweep|discover|validate``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bayes import MODES
from .checks import run_checks
from .errors import ContractError
from .harness import (
    SEED_ENV_VAR,
    ExperimentConfig,
    _rng,
    extract_discovered_graph,
    parse_seed_range,
    run_experiment,
    run_single,
    seeds_from_env,
)


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.mode is not None:
        cfg.mode = args.mode
    if getattr(args, "seeds", None):
        cfg.seeds = parse_seed_range(args.seeds)
    cfg.seeds = seeds_from_env(cfg.seeds)
    if getattr(args, "jobs", None):
        cfg.n_jobs = args.jobs
    return cfg


def _report(summary: dict, out) -> None:
    for alg, info in summary["algorithms"].items():
        fin = info["final_cumulative_regret"]
        print(f"{alg}: cumulative regret {fin['mean']:.3f} +/- {fin['ci95']:.3f} "
              f"over {len(info['seeds'])} seeds")
    for err in summary["errors"]:
        print(f"error: {err['algorithm']} seed {err['seed']}: {err['error']}", file=sys.stderr)
    if out is not None:
        print(f"wrote {Path(out) / 'metrics.csv'}")


def cmd_run(args) -> int:
    cfg = _load(args)
    out = args.out or cfg.out
    _, summary = run_experiment(cfg, out)
    _report(summary, out)
    return 1 if summary["errors"] else 0


def cmd_discover(args) -> int:
    cfg = _load(args)
    specs = [a for a in cfg.agents if a.get("kind") in ("cpsrl", "fpsrl")]
    if not specs:
        raise ContractError("discover needs a cpsrl or fpsrl agent in the config")
    spec, seed = specs[0], cfg.seeds[0]
    _, logs, true_graph = run_single(cfg, spec, seed, keep_logs=True)
    found = extract_discovered_graph(logs, _rng(seed, 4), true_graph)
    result = {
        "algorithm": cfg.agent_config(spec).label,
        "seed": seed,
        "episode": found.episode + 1,
        "graph": found.graph.to_dict(),
        "true_graph": true_graph.to_dict(),
        "supergraph_fraction": found.supergraph_fraction,
    }
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def cmd_validate(args) -> int:
    results = run_checks()
    for name, ok in results.items():
        print(f"{'ok  ' if ok else 'FAIL'} {name}")
    return 0 if all(results.values()) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cpsrl", description="Posterior sampling on factored MDPs.")
    p.add_argument("--mode", choices=MODES, default=None,
                   help="hyper-posterior update rule (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every agent/seed pair of a config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="output directory for metrics.csv and summary.json")
    run.add_argument("--jobs", type=int, help="parallel worker processes")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a config over a seed range")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--seeds", required=True, help="inclusive range a..b or a,b,c")
    sweep.add_argument("--out")
    sweep.add_argument("--jobs", type=int)
    sweep.set_defaults(func=cmd_run)

    disc = sub.add_parser("discover", help="extract a causal graph from one learning run")
    disc.add_argument("--config", required=True)
    disc.add_argument("--out", help="where to write the graph JSON")
    disc.set_defaults(func=cmd_discover)

    val = sub.add_parser("validate", help="run invariant checks on built-in fixtures")
    val.set_defaults(func=cmd_validate)
    p.epilog = f"{SEED_ENV_VAR}=a..b overrides the seed list of run, sweep and discover."
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ContractError, OSError, json.JSONDecodeError) as exc:
        print(f"cpsrl: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
