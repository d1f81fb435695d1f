"""Factored MDPs: representation, validation, simulation and flattening."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from math import prod
from typing import Sequence

import numpy as np

from .errors import ContractError, SizeCapError
from .graph import CausalGraph, assignment_index, radix_weights

DEFAULT_STATE_CAP = 10**6
TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Transition:
    h: int
    x: tuple[int, ...]
    y: tuple[int, ...]
    r: tuple[float, ...]
    s: int = -1
    a: int = -1
    s_next: int = -1


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Flat episodic MDP. ``P`` is (S, A, S), ``R`` is (S, A)."""

    P: np.ndarray
    R: np.ndarray
    mu: np.ndarray
    H: int
    r_max: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "P", _frozen(self.P))
        object.__setattr__(self, "R", _frozen(self.R))
        object.__setattr__(self, "mu", _frozen(self.mu))
        if self.P.ndim != 3 or self.P.shape[0] != self.P.shape[2]:
            raise ContractError(f"P must be (S, A, S), got {self.P.shape}")
        if self.R.shape != self.P.shape[:2]:
            raise ContractError("R shape does not match P")
        if self.mu.shape != (self.P.shape[0],):
            raise ContractError("mu shape does not match P")
        if self.H < 1:
            raise ContractError("horizon must be positive")

    @property
    def S(self) -> int:
        return self.P.shape[0]

    @property
    def A(self) -> int:
        return self.P.shape[1]


@dataclass(frozen=True, eq=False)
class Fmdp:
    """Factored episodic MDP induced by a causal graph.

    ``supports`` lists the cardinality of every left variable: the first
    ``d_y`` entries are state features, the last ``d_a`` action features.
    Next-state factor ``j`` takes values in ``range(supports[j])``.
    ``transitions[j]`` has shape ``(prod(supports[parents[j]]), supports[j])``
    and ``rewards[j]`` holds the matching mean rewards.  ``mu`` is over the
    flat (row-major) state index.
    """

    graph: CausalGraph
    supports: tuple[int, ...]
    d_a: int
    transitions: tuple[np.ndarray, ...]
    rewards: tuple[np.ndarray, ...]
    mu: np.ndarray
    H: int
    Z: int | None = None
    reward_noise: bool = False

    def __post_init__(self):
        g = self.graph
        object.__setattr__(self, "supports", tuple(int(n) for n in self.supports))
        object.__setattr__(self, "transitions", tuple(_frozen(t) for t in self.transitions))
        object.__setattr__(self, "rewards", tuple(_frozen(r) for r in self.rewards))
        object.__setattr__(self, "mu", _frozen(self.mu))
        if self.Z is None:
            object.__setattr__(self, "Z", g.sparseness)
        if len(self.supports) != g.d_x:
            raise ContractError("supports length must equal d_x")
        if any(n < 1 for n in self.supports):
            raise ContractError("supports must be >= 1")
        if g.d_x != g.d_y + self.d_a:
            raise ContractError("d_x must equal d_y + d_a")
        if len(self.transitions) != g.d_y or len(self.rewards) != g.d_y:
            raise ContractError("need one transition and reward table per factor")
        for j, z in enumerate(g.parents):
            rows = prod(self.supports[i] for i in z)
            if self.transitions[j].shape != (rows, self.supports[j]):
                raise ContractError(
                    f"factor {j}: transition shape {self.transitions[j].shape}, "
                    f"expected {(rows, self.supports[j])}")
            if self.rewards[j].shape != (rows,):
                raise ContractError(f"factor {j}: reward shape {self.rewards[j].shape}")
        if self.mu.shape != (self.S,):
            raise ContractError(f"mu has shape {self.mu.shape}, expected ({self.S},)")
        if self.H < 1:
            raise ContractError("horizon must be positive")

    @property
    def d_y(self) -> int:
        return self.graph.d_y

    @property
    def d_x(self) -> int:
        return self.graph.d_x

    @property
    def state_supports(self) -> tuple[int, ...]:
        return self.supports[: self.d_y]

    @property
    def action_supports(self) -> tuple[int, ...]:
        return self.supports[self.d_y:]

    @property
    def S(self) -> int:
        return prod(self.state_supports)

    @property
    def A(self) -> int:
        return prod(self.action_supports)

    @cached_property
    def _scope_radix(self) -> list[np.ndarray]:
        out = []
        for z in self.graph.parents:
            w = np.zeros(self.d_x, dtype=np.int64)
            w[list(z)] = radix_weights([self.supports[i] for i in z])
            out.append(w)
        return out

    @cached_property
    def _radix_matrix(self) -> np.ndarray:
        return np.array(self._scope_radix, dtype=np.int64).reshape(self.d_y, self.d_x)

    @cached_property
    def _padded_tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cumulative rows padded past each factor's support, mean rewards, supports."""
        max_rows = max((t.shape[0] for t in self.transitions), default=1)
        max_n = max(self.state_supports, default=1)
        cum = np.full((self.d_y, max_rows, max_n), 2.0)
        rew = np.zeros((self.d_y, max_rows))
        for j, t in enumerate(self.transitions):
            cum[j, : t.shape[0], : t.shape[1]] = np.cumsum(t, axis=1)
            rew[j, : t.shape[0]] = self.rewards[j]
        return cum, rew, np.array(self.state_supports, dtype=np.int64)

    @cached_property
    def state_features(self) -> np.ndarray:
        """(S, d_y) table decoding flat state indices."""
        return _grid(self.state_supports)

    @cached_property
    def action_features(self) -> np.ndarray:
        return _grid(self.action_supports)

    def row_index(self, j: int, x: Sequence[int]) -> int:
        return int(np.dot(self._scope_radix[j], x))

    def state_index(self, y: Sequence[int]) -> int:
        return assignment_index(y, self.state_supports)

    def action_index(self, a: Sequence[int]) -> int:
        return assignment_index(a, self.action_supports)

    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_dict(),
            "supports": list(self.supports),
            "d_a": self.d_a,
            "transitions": [t.tolist() for t in self.transitions],
            "rewards": [r.tolist() for r in self.rewards],
            "mu": self.mu.tolist(),
            "H": self.H,
            "Z": self.Z,
            "reward_noise": self.reward_noise,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Fmdp":
        return cls(
            graph=CausalGraph.from_dict(data["graph"]),
            supports=tuple(data["supports"]),
            d_a=int(data["d_a"]),
            transitions=tuple(np.asarray(t, dtype=float) for t in data["transitions"]),
            rewards=tuple(np.asarray(r, dtype=float) for r in data["rewards"]),
            mu=np.asarray(data["mu"], dtype=float),
            H=int(data["H"]),
            Z=data.get("Z"),
            reward_noise=bool(data.get("reward_noise", False)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Fmdp":
        return cls.from_dict(json.loads(text))


def _grid(supports: Sequence[int]) -> np.ndarray:
    if not supports:
        return np.zeros((1, 0), dtype=np.int64)
    idx = np.indices(tuple(supports)).reshape(len(supports), -1).T
    return np.ascontiguousarray(idx, dtype=np.int64)


def validate(f: Fmdp) -> list[str]:
    """Every invariant violation found in ``f``; empty list means ok."""
    problems = []
    for j, t in enumerate(f.transitions):
        for row in np.flatnonzero(np.any(t < 0, axis=1)):
            problems.append(f"factor {j} row {row}: negative probability")
        sums = t.sum(axis=1)
        for row in np.flatnonzero(np.abs(sums - 1.0) > TOL):
            problems.append(f"factor {j} row {row}: row not normalized (sum={sums[row]!r})")
    for j, r in enumerate(f.rewards):
        for row in np.flatnonzero((r < 0) | (r > 1)):
            problems.append(f"factor {j} row {row}: reward out of range ({r[row]!r})")
    if np.any(f.mu < 0) or abs(f.mu.sum() - 1.0) > TOL:
        problems.append(f"mu not a distribution (sum={f.mu.sum()!r})")
    if f.Z is not None and f.graph.sparseness > f.Z:
        problems.append(f"graph sparseness {f.graph.sparseness} exceeds Z={f.Z}")
    return problems


def flatten(f: Fmdp, cap: int = DEFAULT_STATE_CAP) -> TabularMdp:
    """Joint tabular MDP: product of factor rows, sum of factor rewards."""
    S, A = f.S, f.A
    if S > cap:
        raise SizeCapError(f"{S} joint states exceed cap {cap}")
    X = _grid(f.supports)  # row-major: flat x index == s * A + a
    P = np.ones((S * A, 1))
    R = np.zeros(S * A)
    for j in range(f.d_y):
        rows = X @ f._scope_radix[j]
        Pj = f.transitions[j][rows]
        P = (P[:, :, None] * Pj[:, None, :]).reshape(S * A, -1)
        R += f.rewards[j][rows]
    return TabularMdp(P.reshape(S, A, S), R.reshape(S, A), f.mu, f.H, r_max=float(f.d_y))


def _check_x(f: Fmdp, x: Sequence[int]):
    if len(x) != f.d_x:
        raise ContractError(f"x has length {len(x)}, expected {f.d_x}")
    for v, n in zip(x, f.supports):
        if not 0 <= v < n:
            raise ContractError(f"x={tuple(x)} outside supports {f.supports}")


def _sample_next(f: Fmdp, x: np.ndarray, rng: np.random.Generator, noise: bool):
    cum, rew, n = f._padded_tables
    rows = f._radix_matrix @ x
    factors = np.arange(f.d_y)
    u = rng.random(f.d_y)
    y = np.minimum((cum[factors, rows] <= u[:, None]).sum(axis=1), n - 1)
    r = rew[factors, rows]
    if noise:
        r = (rng.random(f.d_y) < r).astype(float)
    return y, r


def step(f: Fmdp, x: Sequence[int], rng: np.random.Generator,
         noise: bool | None = None) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Sample the next state and emit the per-factor reward vector.

    Each ``y[j]`` is drawn independently from its factor row.  Rewards are the
    factor means unless ``noise`` asks for Bernoulli draws with those means.
    """
    _check_x(f, x)
    noise = f.reward_noise if noise is None else noise
    y, r = _sample_next(f, np.asarray(x, dtype=np.int64), rng, noise)
    return tuple(int(v) for v in y), tuple(float(v) for v in r)


def rollout(f: Fmdp, policy, rng: np.random.Generator) -> list[Transition]:
    """One episode of ``H`` steps; ``policy[h][s]`` is a flat action index."""
    cum_mu = np.cumsum(f.mu)
    s = min(int(np.searchsorted(cum_mu, rng.random(), side="right")), f.S - 1)
    X = np.concatenate([np.repeat(f.state_features, f.A, axis=0),
                        np.tile(f.action_features, (f.S, 1))], axis=1)
    state_w = radix_weights(f.state_supports)
    out = []
    for h in range(f.H):
        try:
            a = int(policy[h][s])
        except (IndexError, KeyError, TypeError) as exc:
            raise ContractError(f"policy undefined at step {h}, state {s}") from exc
        if not 0 <= a < f.A:
            raise ContractError(f"policy returned invalid action {a}")
        x = X[s * f.A + a]
        y, r = _sample_next(f, x, rng, f.reward_noise)
        s_next = int(y @ state_w)
        out.append(Transition(h, tuple(x.tolist()), tuple(y.tolist()), tuple(r.tolist()),
                              s, a, s_next))
        s = s_next
    return out
