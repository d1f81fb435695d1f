"""Posterior-sampling learners and regret diagnostics.

``CausalPSRL`` samples a factorization from the hyper-posterior, then a
model given that factorization, plans exactly on the flattened sample and
acts for one episode.  F-PSRL is the same learner with a singleton candidate
list per factor.  ``TabularPSRL`` ignores factor structure altogether.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bayes import EXACT, Hierarchy, check_mode, init_hierarchy
from .errors import ContractError, SizeCapError
from .fmdp import DEFAULT_STATE_CAP, Fmdp, TabularMdp, Transition, flatten, rollout
from .graph import CausalGraph, Scope
from .planner import backward_induction

AGENT_KINDS = ("cpsrl", "fpsrl", "psrl")


@dataclass
class AgentConfig:
    kind: str
    Z: int | None = None
    eta: int = 2
    graph: CausalGraph | None = None   # prior graph for cpsrl, true graph for fpsrl
    mode: str = EXACT
    seed: int = 0
    label: str | None = None

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ContractError(f"unknown agent kind {self.kind!r}")
        check_mode(self.mode)
        if self.label is None:
            self.label = f"cpsrl(eta={self.eta})" if self.kind == "cpsrl" else self.kind


@dataclass
class Diagnostics:
    hyper_entropy: list[float]
    hypothesis_counts: list[int]
    reward_width: float = float("nan")       # mean reward width over visited cells
    transition_width: float = float("nan")   # mean transition width over visited cells

    @property
    def total_width(self) -> float:
        return self.reward_width + self.transition_width


@dataclass
class EpisodeLog:
    episode: int
    factorization: list[Scope] | None
    policy: np.ndarray
    transitions: list[Transition]
    diagnostics: Diagnostics
    sampled_model: Fmdp | TabularMdp | None = None
    regret: float | None = None
    model_error: float | None = None

    def sampled_graph(self, d_x: int) -> CausalGraph | None:
        if self.factorization is None:
            return None
        return CausalGraph(d_x, len(self.factorization), tuple(self.factorization))


def confidence_widths(alpha_r_mass, alpha_p_mass, K: int, d_y: int, N: int, Z: int):
    """Reward and transition confidence widths for posterior masses.

    ``c = sqrt(log(2 K d_y N**Z) / (2 (mass_R + 1)))`` and
    ``phi = sqrt(N log(2 K d_y N**Z) / (2 (mass_P + 1)))``.
    Works elementwise on arrays.
    """
    if K < 1:
        raise ContractError("K must be >= 1")
    ar = np.asarray(alpha_r_mass, dtype=float)
    ap = np.asarray(alpha_p_mass, dtype=float)
    if np.any(ar < 0) or np.any(ap < 0):
        raise ContractError("posterior masses must be non-negative")
    log_term = math.log(2 * K * d_y) + Z * math.log(N)
    c = np.sqrt(log_term / (2 * (ar + 1)))
    phi = np.sqrt(N * log_term / (2 * (ap + 1)))
    if c.ndim == 0:
        return float(c), float(phi)
    return c, phi


def regret_bound_terms(H, N, Z, d_x, d_y, eta, K) -> tuple[float, float, float, float]:
    """The four leading terms of the Bayesian regret bound, constants dropped."""
    hyp = 2.0 ** (d_x - eta)
    return (
        H**2 * d_y * N**Z,
        H**2.5 * d_y * N ** (1 + Z / 2) * math.sqrt(K),
        math.sqrt(hyp * K * H),
        d_y * hyp * H**2,
    )


def regret_bound(H, N, Z, d_x, d_y, eta, K) -> float:
    return float(sum(regret_bound_terms(H, N, Z, d_x, d_y, eta, K)))


class CausalPSRL:
    """Hierarchical posterior sampling over factorizations and factor tables."""

    def __init__(self, hierarchy: Hierarchy, mu, H: int, Z: int, K: int = 1,
                 state_cap: int = DEFAULT_STATE_CAP, label: str = "cpsrl"):
        self.hierarchy = hierarchy
        self.mu = np.asarray(mu, dtype=float)
        self.H = H
        self.Z = Z
        self.K = max(int(K), 1)
        self.state_cap = state_cap
        self.label = label
        self.episodes = 0

    @property
    def d_x(self) -> int:
        return self.hierarchy.d_x

    def plan(self, rng: np.random.Generator):
        scopes = self.hierarchy.sample_factorization(rng)
        model = self.hierarchy.sample_model(scopes, rng, self.mu, self.H, Z=self.Z)
        flat = flatten(model, cap=self.state_cap)
        policy, _ = backward_induction(flat)
        return scopes, model, flat, policy

    def _widths(self, scopes, transitions) -> tuple[float, float]:
        if not transitions:
            return float("nan"), float("nan")
        X = np.array([t.x for t in transitions], dtype=np.int64)
        r_mass, p_mass = [], []
        for f, z in zip(self.hierarchy.factors, scopes):
            post = f.posterior(z)
            rows = np.zeros(len(X), dtype=np.int64)
            for i, n in zip(post.scope, post.row_supports):
                rows = rows * n + X[:, i]
            r_mass.append(post.reward[rows].sum(axis=1))
            p_mass.append(post.alpha[rows].sum(axis=1))
        N = max(self.hierarchy.supports)
        c, phi = confidence_widths(np.concatenate(r_mass), np.concatenate(p_mass),
                                   self.K, self.hierarchy.d_y, N, self.Z)
        return float(c.mean()), float(phi.mean())

    def run_episode(self, env: Fmdp, rng: np.random.Generator,
                    env_rng: np.random.Generator | None = None) -> EpisodeLog:
        """Sample, plan, act one episode in ``env``, then update the posteriors."""
        env_rng = rng if env_rng is None else env_rng
        entropies = self.hierarchy.entropies()
        scopes, model, _, policy = self.plan(rng)
        transitions = rollout(env, policy, env_rng)
        c, phi = self._widths(scopes, transitions)
        self.hierarchy.observe_all(transitions)
        diag = Diagnostics(entropies, self.hierarchy.hypothesis_counts(), c, phi)
        log = EpisodeLog(self.episodes, scopes, policy, transitions, diag, model)
        self.episodes += 1
        return log


class TabularPSRL:
    """PSRL with a flat Dirichlet over successor states and an aggregate Beta reward.

    Rewards are learned as ``sum(r) / reward_scale`` clipped to [0, 1] and
    scaled back by ``reward_scale`` when planning.
    """

    def __init__(self, S: int, A: int, H: int, mu, reward_scale: float = 1.0,
                 K: int = 1, cap: int = 10**8, label: str = "psrl"):
        if S * A * S > cap:
            raise SizeCapError(f"S*A*S = {S * A * S} exceeds cap {cap}")
        self.S, self.A, self.H = S, A, H
        self.mu = np.asarray(mu, dtype=float)
        self.reward_scale = float(reward_scale)
        self.K = max(int(K), 1)
        self.alpha = np.ones((S * A, S))
        self.reward = np.ones((S * A, 2))
        self.label = label
        self.episodes = 0

    def sample_model(self, rng: np.random.Generator) -> TabularMdp:
        g = rng.standard_gamma(self.alpha)
        P = g / g.sum(axis=1, keepdims=True)
        R = self.reward_scale * rng.beta(self.reward[:, 0], self.reward[:, 1])
        return TabularMdp(P.reshape(self.S, self.A, self.S), R.reshape(self.S, self.A),
                          self.mu, self.H, r_max=self.reward_scale)

    def mean_model(self) -> TabularMdp:
        P = self.alpha / self.alpha.sum(axis=1, keepdims=True)
        R = self.reward_scale * self.reward[:, 0] / self.reward.sum(axis=1)
        return TabularMdp(P.reshape(self.S, self.A, self.S), R.reshape(self.S, self.A),
                          self.mu, self.H, r_max=self.reward_scale)

    def observe(self, t: Transition):
        if not (0 <= t.s < self.S and 0 <= t.a < self.A and 0 <= t.s_next < self.S):
            raise ContractError("transition lacks valid flat indices")
        i = t.s * self.A + t.a
        self.alpha[i, t.s_next] += 1.0
        r = min(max(sum(t.r) / self.reward_scale, 0.0), 1.0)
        self.reward[i, 0] += r
        self.reward[i, 1] += 1.0 - r

    def observe_all(self, transitions: Sequence[Transition]):
        for t in transitions:
            self.observe(t)

    def run_episode(self, env: Fmdp, rng: np.random.Generator,
                    env_rng: np.random.Generator | None = None) -> EpisodeLog:
        env_rng = rng if env_rng is None else env_rng
        model = self.sample_model(rng)
        policy, _ = backward_induction(model)
        transitions = rollout(env, policy, env_rng)
        if transitions:
            idx = np.array([t.s * self.A + t.a for t in transitions])
            c, phi = confidence_widths(self.reward[idx].sum(axis=1),
                                       self.alpha[idx].sum(axis=1),
                                       self.K, 1, self.S, 1)
            c, phi = float(c.mean()), float(phi.mean())
        else:
            c = phi = float("nan")
        self.observe_all(transitions)
        diag = Diagnostics([0.0], [1], c, phi)
        log = EpisodeLog(self.episodes, None, policy, transitions, diag, model)
        self.episodes += 1
        return log


def make_cpsrl(prior: CausalGraph, Z: int, env: Fmdp, mode: str = EXACT, K: int = 1,
               label: str | None = None) -> CausalPSRL:
    h = init_hierarchy(prior, Z, env.supports, mode)
    return CausalPSRL(h, env.mu, env.H, Z, K=K, label=label or "cpsrl")


def make_fpsrl(true_graph: CausalGraph, supports: Sequence[int], H: int, mu,
               mode: str = EXACT, K: int = 1, Z: int | None = None,
               label: str = "fpsrl") -> CausalPSRL:
    """C-PSRL whose candidate list per factor is the true parent set alone."""
    Z = true_graph.sparseness if Z is None else Z
    if true_graph.sparseness > Z:
        raise ContractError("true graph is not Z-sparse")
    h = Hierarchy([[z] for z in true_graph.parents], supports, mode)
    return CausalPSRL(h, mu, H, Z, K=K, label=label)


def make_psrl(S: int, A: int, H: int, mu, reward_scale: float = 1.0, K: int = 1,
              label: str = "psrl") -> TabularPSRL:
    return TabularPSRL(S, A, H, mu, reward_scale=reward_scale, K=K, label=label)


def build_agent(cfg: AgentConfig, env: Fmdp, true_graph: CausalGraph,
                prior: CausalGraph | None = None, K: int = 1):
    """Instantiate the learner described by ``cfg`` for ``env``."""
    Z = cfg.Z if cfg.Z is not None else env.Z
    if cfg.kind == "psrl":
        return make_psrl(env.S, env.A, env.H, env.mu, reward_scale=env.d_y, K=K,
                         label=cfg.label)
    if cfg.kind == "fpsrl":
        graph = cfg.graph or true_graph
        return make_fpsrl(graph, env.supports, env.H, env.mu, cfg.mode, K=K, Z=Z,
                          label=cfg.label)
    prior = cfg.graph or prior
    if prior is None:
        raise ContractError("cpsrl needs a prior graph")
    if prior.d_x != env.d_x or prior.d_y != env.d_y:
        raise ContractError("prior graph dimensions do not match the environment")
    return make_cpsrl(prior, Z, env, cfg.mode, K=K, label=cfg.label)


def cpsrl_episode(agent: CausalPSRL, env: Fmdp, rng: np.random.Generator) -> EpisodeLog:
    return agent.run_episode(env, rng)
