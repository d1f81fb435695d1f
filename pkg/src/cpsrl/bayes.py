"""Hierarchical conjugate inference over factorizations.

Each next-state factor ``j`` carries a Categorical hyper-posterior over its
candidate parent sets.  Every candidate owns Dirichlet rows for the
transition factor and Beta rows for the mean reward, one row per parent
assignment.  All candidates see every observation, each through its own
scope.

Storage is flat: the rows of every candidate of every factor live in one
``(total_rows, max_support)`` array so that an observation touches all
candidates in a handful of vectorized operations.  The per-factor and
per-candidate objects hand out views into that storage.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from math import prod
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import ContractError
from .fmdp import Fmdp, Transition
from .graph import CausalGraph, Scope, enumerate_consistent_scopes, radix_weights

EXACT = "exact-bayes"
LITERAL = "paper-literal"
MODES = (EXACT, LITERAL)


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ContractError(f"unknown hyper-update mode {mode!r}; use one of {MODES}")
    return mode


@dataclass
class DirichletRow:
    alpha: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if np.any(self.alpha <= 0):
            raise ContractError("Dirichlet parameters must be positive")

    @property
    def mass(self) -> float:
        return float(self.alpha.sum())

    def mean(self) -> np.ndarray:
        return self.alpha / self.alpha.sum()


@dataclass
class BetaRow:
    a: float
    b: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ContractError("Beta parameters must be positive")

    @property
    def mass(self) -> float:
        return self.a + self.b

    def mean(self) -> float:
        return self.a / (self.a + self.b)


def predictive_prob(row: DirichletRow, outcome: int, mode: str = EXACT) -> float:
    """Multiplier applied to a candidate's hyper-weight after seeing ``outcome``.

    ``exact-bayes`` is the Dirichlet-Categorical predictive ``alpha_n / sum(alpha)``;
    ``paper-literal`` is ``(alpha_n + 1) / (sum(alpha) + 1)``.
    """
    check_mode(mode)
    if not 0 <= outcome < len(row.alpha):
        raise ContractError(f"outcome {outcome} outside [0, {len(row.alpha)})")
    a, tot = float(row.alpha[outcome]), row.mass
    if mode == EXACT:
        return a / tot
    return (a + 1.0) / (tot + 1.0)


class FactorPosterior:
    """Dirichlet and Beta rows of one candidate scope (views into shared storage)."""

    def __init__(self, scope: Scope, row_supports: Sequence[int],
                 alpha: np.ndarray, reward: np.ndarray):
        self.scope = scope
        self.row_supports = tuple(row_supports)
        self.alpha = alpha      # (rows, n_j)
        self.reward = reward    # (rows, 2): Beta (a, b)

    @property
    def n_rows(self) -> int:
        return self.alpha.shape[0]

    def row_of(self, x: Sequence[int]) -> int:
        idx = 0
        for i, n in zip(self.scope, self.row_supports):
            idx = idx * n + int(x[i])
        return idx

    def transition_row(self, i: int) -> DirichletRow:
        return DirichletRow(self.alpha[i].copy())

    def reward_row(self, i: int) -> BetaRow:
        return BetaRow(float(self.reward[i, 0]), float(self.reward[i, 1]))


class HyperPosterior:
    """Categorical belief over the candidate scopes of one factor."""

    def __init__(self, factor: int, candidates: list[Scope], log_weights: np.ndarray,
                 posteriors: list[FactorPosterior]):
        self.factor = factor
        self.candidates = candidates
        self.log_weights = log_weights  # view, unnormalized
        self.posteriors = posteriors

    @property
    def weights(self) -> np.ndarray:
        """Unnormalized weights, rescaled to sum to the candidate count."""
        return self.probabilities * len(self.candidates)

    @property
    def probabilities(self) -> np.ndarray:
        lw = self.log_weights
        p = np.exp(lw - lw.max())
        return p / p.sum()

    def entropy(self) -> float:
        p = self.probabilities
        nz = p[p > 0]
        return float(max(0.0, -(nz * np.log(nz)).sum()))

    def posterior(self, scope: Sequence[int]) -> FactorPosterior:
        return self.posteriors[self.candidates.index(tuple(scope))]


class Hierarchy:
    """Per-factor hyper-posteriors plus their candidate-conditional posteriors."""

    def __init__(self, candidates: Sequence[Sequence[Scope]], supports: Sequence[int],
                 mode: str = EXACT):
        self.mode = check_mode(mode)
        self.supports = tuple(int(n) for n in supports)
        self.d_x = len(self.supports)
        self.d_y = len(candidates)
        if self.d_y > self.d_x:
            raise ContractError("more factors than left variables")
        cand = [[tuple(c) for c in cs] for cs in candidates]
        if any(len(cs) == 0 for cs in cand):
            raise ContractError("every factor needs at least one candidate")

        n_out = [self.supports[j] for j in range(self.d_y)]
        self._n_out = np.array(n_out, dtype=np.int64)
        self.max_n = max(n_out, default=1)
        radix, offset, factor_of, row_counts = [], [], [], []
        total = 0
        for j, cs in enumerate(cand):
            for z in cs:
                if any(not 0 <= i < self.d_x for i in z):
                    raise ContractError(f"candidate {z} out of range")
                w = np.zeros(self.d_x, dtype=np.int64)
                row_sup = [self.supports[i] for i in z]
                w[list(z)] = radix_weights(row_sup)
                radix.append(w)
                offset.append(total)
                factor_of.append(j)
                rows = prod(row_sup)
                row_counts.append(rows)
                total += rows
        self._radix = np.array(radix, dtype=np.int64).reshape(-1, self.d_x)
        self._offset = np.array(offset, dtype=np.int64)
        self._factor_of = np.array(factor_of, dtype=np.int64)
        self._alpha = np.zeros((total, self.max_n))
        self._reward = np.ones((total, 2))
        self._logw = np.zeros(len(offset))

        self.factors: list[HyperPosterior] = []
        c = 0
        for j, cs in enumerate(cand):
            posts = []
            for z in cs:
                off, rows = offset[c], row_counts[c]
                block = self._alpha[off:off + rows, :n_out[j]]
                block[...] = 1.0
                posts.append(FactorPosterior(
                    z, [self.supports[i] for i in z], block,
                    self._reward[off:off + rows]))
                c += 1
            self.factors.append(HyperPosterior(
                j, cs, self._logw[c - len(cs):c], posts))
        self._alpha_tot = self._alpha.sum(axis=1)
        self._cand_of_row = np.repeat(np.arange(len(offset)), row_counts)

    def hypothesis_counts(self) -> list[int]:
        return [len(f.candidates) for f in self.factors]

    def observe(self, t: Transition, mode: str | None = None):
        """Condition on one transition (all factors, all candidates)."""
        mode = self.mode if mode is None else check_mode(mode)
        x = np.asarray(t.x, dtype=np.int64)
        if x.shape != (self.d_x,):
            raise ContractError(f"transition x has length {len(t.x)}, expected {self.d_x}")
        rows = self._offset + self._radix @ x
        y_all = np.asarray(t.y, dtype=np.int64)
        if y_all.shape != (self.d_y,) or np.any(y_all < 0) or np.any(y_all >= self._n_out):
            raise ContractError(f"transition y={t.y} outside next-state supports")
        y = y_all[self._factor_of]
        r = np.asarray(t.r, dtype=float)[self._factor_of]
        a = self._alpha[rows, y]
        tot = self._alpha_tot[rows]
        if mode == EXACT:
            self._logw += np.log(a) - np.log(tot)
        else:
            self._logw += np.log(a + 1.0) - np.log(tot + 1.0)
        self._alpha[rows, y] += 1.0
        self._alpha_tot[rows] += 1.0
        self._reward[rows, 0] += r
        self._reward[rows, 1] += 1.0 - r

    def observe_all(self, transitions: Sequence[Transition], mode: str | None = None):
        """Condition on a batch of transitions, then renormalize the weights.

        Equivalent to calling :meth:`observe` in sequence: the product of the
        sequential multipliers for one row only depends on the per-outcome
        counts, so it is evaluated in closed form with log-gamma ratios.
        """
        if not transitions:
            return
        mode = self.mode if mode is None else check_mode(mode)
        X = np.array([t.x for t in transitions], dtype=np.int64)
        Y = np.array([t.y for t in transitions], dtype=np.int64)
        Rw = np.array([t.r for t in transitions], dtype=float)
        if X.shape[1:] != (self.d_x,) or Y.shape[1:] != (self.d_y,):
            raise ContractError("transition shapes do not match the hierarchy")
        if np.any(Y < 0) or np.any(Y >= self._n_out):
            raise ContractError("transition y outside next-state supports")
        rows = (X @ self._radix.T + self._offset).ravel()
        ys = Y[:, self._factor_of].ravel()
        shift = 0.0 if mode == EXACT else 1.0

        keys, cnt = np.unique(rows * self.max_n + ys, return_counts=True)
        kr, ky = np.divmod(keys, self.max_n)
        a = self._alpha[kr, ky] + shift
        num = np.bincount(self._cand_of_row[kr], gammaln(a + cnt) - gammaln(a),
                          minlength=len(self._logw))
        urows, rcnt = np.unique(rows, return_counts=True)
        tot = self._alpha_tot[urows] + shift
        den = np.bincount(self._cand_of_row[urows], gammaln(tot + rcnt) - gammaln(tot),
                          minlength=len(self._logw))
        self._logw += num - den

        self._alpha[kr, ky] += cnt
        self._alpha_tot[urows] += rcnt
        r = Rw[:, self._factor_of].ravel()
        np.add.at(self._reward[:, 0], rows, r)
        np.add.at(self._reward[:, 1], rows, 1.0 - r)
        self.renormalize()

    def renormalize(self):
        """Rescale each factor's weights to sum to its candidate count."""
        for f in self.factors:
            lw = f.log_weights
            lw -= logsumexp(lw) - np.log(len(lw))

    def entropies(self) -> list[float]:
        return [f.entropy() for f in self.factors]

    def sample_factorization(self, rng: np.random.Generator) -> list[Scope]:
        out = []
        for f in self.factors:
            if len(f.candidates) == 1:
                out.append(f.candidates[0])
            else:
                out.append(f.candidates[int(rng.choice(len(f.candidates), p=f.probabilities))])
        return out

    def sample_model(self, scopes: Sequence[Scope], rng: np.random.Generator,
                     mu, H: int, Z: int | None = None) -> Fmdp:
        """Draw transition rows and mean rewards conditioned on ``scopes``."""
        trans, rews = [], []
        for f, z in zip(self.factors, scopes):
            post = f.posterior(z)
            g = rng.standard_gamma(post.alpha)
            trans.append(g / g.sum(axis=1, keepdims=True))
            rews.append(rng.beta(post.reward[:, 0], post.reward[:, 1]))
        graph = CausalGraph(self.d_x, self.d_y, tuple(scopes))
        return Fmdp(graph, self.supports, self.d_x - self.d_y, tuple(trans),
                    tuple(rews), mu, H, Z=Z if Z is not None else graph.sparseness)

    def mean_model(self, scopes: Sequence[Scope], mu, H: int) -> Fmdp:
        trans, rews = [], []
        for f, z in zip(self.factors, scopes):
            post = f.posterior(z)
            trans.append(post.alpha / post.alpha.sum(axis=1, keepdims=True))
            rews.append(post.reward[:, 0] / post.reward.sum(axis=1))
        graph = CausalGraph(self.d_x, self.d_y, tuple(scopes))
        return Fmdp(graph, self.supports, self.d_x - self.d_y, tuple(trans),
                    tuple(rews), mu, H, Z=graph.sparseness)

    def alpha_mass(self) -> np.ndarray:
        """Total Dirichlet mass per factor summed over all rows of all candidates."""
        return np.array([sum(p.alpha.sum() for p in f.posteriors) for f in self.factors])

    def snapshot(self) -> dict:
        return {
            "mode": self.mode,
            "supports": list(self.supports),
            "factors": [
                {
                    "candidates": [list(z) for z in f.candidates],
                    "log_weights": f.log_weights.tolist(),
                    "alpha": [p.alpha.tolist() for p in f.posteriors],
                    "beta": [p.reward.tolist() for p in f.posteriors],
                }
                for f in self.factors
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.snapshot())

    @classmethod
    def from_snapshot(cls, data: dict) -> "Hierarchy":
        cands = [[tuple(z) for z in f["candidates"]] for f in data["factors"]]
        h = cls(cands, data["supports"], data["mode"])
        for f, fd in zip(h.factors, data["factors"]):
            f.log_weights[...] = fd["log_weights"]
            for p, a, b in zip(f.posteriors, fd["alpha"], fd["beta"]):
                p.alpha[...] = a
                p.reward[...] = b
        h._alpha_tot = h._alpha.sum(axis=1)
        return h


def init_hierarchy(graph_prior: CausalGraph, Z: int, supports: Sequence[int],
                   mode: str = EXACT) -> Hierarchy:
    """Uniform hyper-prior over all Z-sparse supersets of the prior, flat priors below."""
    if len(supports) != graph_prior.d_x:
        raise ContractError("supports length must equal d_x")
    cands = [enumerate_consistent_scopes(graph_prior.d_x, p, Z) for p in graph_prior.parents]
    return Hierarchy(cands, supports, mode)


def sample_factorization(h: Hierarchy, rng: np.random.Generator) -> list[Scope]:
    return h.sample_factorization(rng)


def sample_model(h: Hierarchy, scopes: Sequence[Scope], rng: np.random.Generator,
                 mu, H: int) -> Fmdp:
    return h.sample_model(scopes, rng, mu, H)


def observe(h: Hierarchy, transition: Transition, mode: str | None = None) -> Hierarchy:
    h.observe(transition, mode)
    h.renormalize()
    return h
