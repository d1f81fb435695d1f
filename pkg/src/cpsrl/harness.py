"""Experiment orchestration: seeded runs, regret and model-error metrics, CSV output."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .agents import AgentConfig, EpisodeLog, build_agent
from .bayes import EXACT, check_mode
from .errors import ContractError
from .envs import make_env, reveal_prior
from .fmdp import DEFAULT_STATE_CAP, Fmdp, TabularMdp, flatten
from .graph import CausalGraph, is_subgraph
from .planner import backward_induction, evaluate_policy

log = logging.getLogger(__name__)

REGRET_FLOOR = -1e-9
SEED_ENV_VAR = "CPSRL_SEEDS"


@dataclass
class ExperimentConfig:
    env: str
    agents: list[dict]
    K: int
    seeds: list[int]
    env_params: dict = field(default_factory=dict)
    mode: str = EXACT
    eta: int = 2
    out: str | None = None
    timing: bool = False
    n_jobs: int = 1
    state_cap: int = DEFAULT_STATE_CAP

    def __post_init__(self):
        if self.K < 1:
            raise ContractError("K must be >= 1")
        if not self.seeds:
            raise ContractError("need at least one seed")
        check_mode(self.mode)
        self.seeds = [int(s) for s in self.seeds]
        labels = [self.agent_config(a).label for a in self.agents]
        if len(set(labels)) != len(labels):
            raise ContractError(f"duplicate agent labels {labels}")

    def agent_config(self, spec: dict) -> AgentConfig:
        spec = dict(spec)
        graph = spec.pop("graph", None)
        spec.setdefault("eta", self.eta)
        spec.setdefault("mode", self.mode)
        return AgentConfig(graph=CausalGraph.from_dict(graph) if graph else None, **spec)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        seeds = data.get("seeds", [0])
        if isinstance(seeds, str):
            seeds = parse_seed_range(seeds)
        elif isinstance(seeds, dict):
            seeds = list(range(seeds["start"], seeds["stop"]))
        data["seeds"] = seeds
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ContractError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


def parse_seed_range(text: str) -> list[int]:
    """``"a..b"`` (inclusive) or a comma-separated list."""
    text = text.strip()
    if ".." in text:
        a, b = text.split("..", 1)
        return list(range(int(a), int(b) + 1))
    return [int(s) for s in text.split(",") if s.strip()]


def seeds_from_env(default: Sequence[int]) -> list[int]:
    raw = os.environ.get(SEED_ENV_VAR)
    return parse_seed_range(raw) if raw else list(default)


@dataclass
class MetricRow:
    run_id: str
    seed: int
    algorithm: str
    episode: int
    per_episode_regret: float
    cumulative_regret: float
    model_error_l1: float
    hyper_entropy_mean: float
    elapsed_ms: float


CSV_FIELDS = [f.name for f in fields(MetricRow)]


@dataclass
class Reference:
    """True flattened model and its optimal value, computed once per instance."""

    flat: TabularMdp
    v_star: float

    @classmethod
    def of(cls, env: Fmdp, cap: int = DEFAULT_STATE_CAP) -> "Reference":
        flat = flatten(env, cap=cap)
        _, V = backward_induction(flat)
        return cls(flat, float(flat.mu @ V[0]))


def per_episode_regret(env: Fmdp | TabularMdp | Reference, policy) -> float:
    """``V*(pi*) - V*(pi_k)`` by exact evaluation on the true flat model."""
    if isinstance(env, Fmdp):
        env = Reference.of(env)
    elif isinstance(env, TabularMdp):
        env = Reference(env, float(env.mu @ backward_induction(env)[1][0]))
    gap = env.v_star - evaluate_policy(env.flat, policy)
    if gap < REGRET_FLOOR:
        raise ContractError(f"policy beats the optimum by {-gap!r}")
    return max(gap, 0.0)


def _as_flat(m) -> TabularMdp:
    if isinstance(m, Reference):
        return m.flat
    return flatten(m) if isinstance(m, Fmdp) else m


def model_error_l1(p_true, p_sampled) -> float:
    """Mean over flat (s, a) of the l1 distance between next-state distributions."""
    a, b = _as_flat(p_true), _as_flat(p_sampled)
    if a.P.shape != b.P.shape:
        raise ContractError(f"model shapes differ: {a.P.shape} vs {b.P.shape}")
    return float(np.abs(a.P - b.P).sum(axis=2).mean())


@dataclass
class Discovery:
    graph: CausalGraph
    episode: int
    supergraph_fraction: float | None


def supergraph_flags(logs: Sequence[EpisodeLog], true_graph: CausalGraph) -> np.ndarray:
    return np.array([is_subgraph(true_graph, lg.sampled_graph(true_graph.d_x))
                     for lg in logs], dtype=bool)


def extract_discovered_graph(logs: Sequence[EpisodeLog], rng: np.random.Generator,
                             true_graph: CausalGraph | None = None,
                             d_x: int | None = None) -> Discovery:
    """Pick one episode uniformly at random and return its sampled graph.

    With ``true_graph`` the result also reports the fraction of episodes whose
    sampled graph contains it.
    """
    logs = [lg for lg in logs if lg.factorization is not None]
    if not logs:
        raise ContractError("no episodes with a sampled factorization")
    if true_graph is not None:
        d_x = true_graph.d_x
    elif d_x is None:
        d_x = 1 + max((i for lg in logs for z in lg.factorization for i in z), default=-1)
    k = int(rng.integers(len(logs)))
    frac = None
    if true_graph is not None:
        frac = float(supergraph_flags(logs, true_graph).mean())
    return Discovery(logs[k].sampled_graph(d_x), logs[k].episode, frac)


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *tags]))


def _tag(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def build_instance(cfg: ExperimentConfig, seed: int):
    """Environment, true graph and revealed prior for one seed (shared by all agents)."""
    env, true_graph = make_env(cfg.env, cfg.env_params, _rng(seed, 0))
    prior = reveal_prior(true_graph, cfg.eta, _rng(seed, 1), clip=True)
    return env, true_graph, prior


def run_single(cfg: ExperimentConfig, agent_spec: dict, seed: int,
               keep_logs: bool = False):
    """Full K-episode loop for one (agent, seed); returns metric rows and logs."""
    acfg = cfg.agent_config(agent_spec)
    env, true_graph, prior = build_instance(cfg, seed)
    if acfg.kind == "cpsrl" and acfg.eta != cfg.eta:
        prior = reveal_prior(true_graph, acfg.eta, _rng(seed, 1), clip=True)
    ref = Reference.of(env, cfg.state_cap)
    agent = build_agent(acfg, env, true_graph, prior, K=cfg.K)
    tag = _tag(acfg.label)
    agent_rng, env_rng = _rng(seed, 2, tag), _rng(seed, 3, tag)
    rows, logs = [], []
    cum = 0.0
    for k in range(cfg.K):
        t0 = time.perf_counter()
        lg = agent.run_episode(env, agent_rng, env_rng)
        lg.regret = per_episode_regret(ref, lg.policy)
        lg.model_error = model_error_l1(ref, lg.sampled_model)
        elapsed = (time.perf_counter() - t0) * 1000.0 if cfg.timing else 0.0
        cum += lg.regret
        ent = lg.diagnostics.hyper_entropy
        rows.append(MetricRow(f"{acfg.label}/seed{seed}", seed, acfg.label, k + 1,
                              lg.regret, cum, lg.model_error,
                              float(np.mean(ent)) if ent else 0.0, elapsed))
        if keep_logs:
            lg.sampled_model = None
            logs.append(lg)
    return rows, logs, true_graph


def _run_job(args):
    cfg, spec, seed = args
    try:
        rows, _, _ = run_single(cfg, spec, seed)
        return rows, None
    except Exception as exc:  # one failed run must not abort the others
        return [], f"{type(exc).__name__}: {exc}"


def write_csv(rows: Sequence[MetricRow], path) -> None:
    Path(path).write_bytes(rows_to_csv(rows).encode("utf-8"))


def rows_to_csv(rows: Sequence[MetricRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v
                    for v in (getattr(r, f) for f in CSV_FIELDS)])
    return buf.getvalue()


def read_csv(path) -> list[MetricRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        out = []
        for rec in csv.DictReader(fh):
            out.append(MetricRow(
                rec["run_id"], int(rec["seed"]), rec["algorithm"], int(rec["episode"]),
                *(float(rec[f]) for f in CSV_FIELDS[4:])))
        return out


def mean_ci(values) -> tuple[float, float]:
    """Mean and 95% normal-approximation half-width."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(1.96 * v.std(ddof=1) / math.sqrt(len(v)))


def summarize(rows: Sequence[MetricRow], K: int) -> dict:
    by_alg: dict[str, dict[int, list[MetricRow]]] = {}
    for r in rows:
        by_alg.setdefault(r.algorithm, {}).setdefault(r.seed, []).append(r)
    out = {}
    for alg, runs in by_alg.items():
        runs = {s: rs for s, rs in runs.items() if len(rs) == K}
        if not runs:
            continue
        curves = {}
        for metric in ("cumulative_regret", "per_episode_regret", "model_error_l1",
                       "hyper_entropy_mean"):
            mat = np.array([[getattr(r, metric) for r in rs] for rs in runs.values()])
            stats = [mean_ci(mat[:, k]) for k in range(K)]
            curves[metric] = {"mean": [m for m, _ in stats], "ci95": [c for _, c in stats]}
        final = [rs[-1].cumulative_regret for rs in runs.values()]
        m, c = mean_ci(final)
        out[alg] = {"seeds": sorted(runs), "final_cumulative_regret": {"mean": m, "ci95": c},
                    "curves": curves}
    return out


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> tuple[list[MetricRow], dict]:
    """Run every (agent, seed) pair; write ``metrics.csv`` and ``summary.json``."""
    t0 = time.perf_counter()
    jobs = [(cfg, spec, seed) for spec in cfg.agents for seed in cfg.seeds]
    if cfg.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    rows, errors = [], []
    for (_, spec, seed), (rs, err) in zip(jobs, results):
        rows.extend(rs)
        if err is not None:
            label = cfg.agent_config(spec).label
            log.warning("run %s seed %d failed: %s", label, seed, err)
            errors.append({"algorithm": label, "seed": seed, "error": err})
    summary = {
        "config": cfg.to_dict(),
        "errors": errors,
        "algorithms": summarize(rows, cfg.K),
        "runtime_s": time.perf_counter() - t0,
    }
    out_dir = out_dir if out_dir is not None else cfg.out
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(rows, out / "metrics.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return rows, summary
