"""Invariant checks on built-in fixtures, used by ``cpsrl validate``."""
from __future__ import annotations

from math import lgamma
from typing import Callable

import numpy as np

from .bayes import Hierarchy
from .envs import discovery_fixture, make_taxi, random_fmdp
from .fmdp import TabularMdp, Transition, flatten, validate
from .graph import count_consistent_scopes, enumerate_consistent_scopes
from .planner import brute_force_optimal, optimal_value


def _log_evidence(scope, supports, data, n_out):
    counts: dict[tuple, list[int]] = {}
    for x, y in data:
        counts.setdefault(tuple(x[i] for i in scope), [0] * n_out)[y] += 1
    total = 0.0
    for cs in counts.values():
        total += sum(lgamma(1 + c) for c in cs) - lgamma(n_out + sum(cs)) + lgamma(n_out)
    return total


def check_fixtures() -> bool:
    rng = np.random.default_rng(0)
    envs = [make_taxi(3, 3, 10)[0], make_taxi(5, 5, 15)[0], discovery_fixture()[0],
            random_fmdp(H=5, rng=rng)[0]]
    for f in envs:
        if validate(f):
            return False
        if np.any(np.abs(flatten(f).P.sum(axis=2) - 1.0) > 1e-12):
            return False
    return True


def check_planner(n: int = 50) -> bool:
    rng = np.random.default_rng(1)
    for _ in range(n):
        S, A, H = (int(v) for v in (rng.integers(1, 4), rng.integers(1, 3), rng.integers(1, 4)))
        m = TabularMdp(rng.dirichlet(np.ones(S), size=(S, A)), rng.random((S, A)),
                       rng.dirichlet(np.ones(S)), H)
        if abs(optimal_value(m) - brute_force_optimal(m)) > 1e-12:
            return False
    return True


def check_conjugacy(n: int = 50) -> bool:
    rng = np.random.default_rng(2)
    cands = enumerate_consistent_scopes(3, (), 2)[:3]
    supports = (3, 2, 2)
    for _ in range(n):
        data = [(tuple(int(rng.integers(k)) for k in supports), int(rng.integers(3)))
                for _ in range(10)]
        h = Hierarchy([cands], supports)
        h.observe_all([Transition(0, x, (y,), (0.0,)) for x, y in data])
        ev = np.array([_log_evidence(z, supports, data, 3) for z in cands])
        p = np.exp(ev - ev.max())
        if np.max(np.abs(h.factors[0].probabilities - p / p.sum())) > 1e-9:
            return False
    return True


def check_counting() -> bool:
    for d_x in range(9):
        for Z in range(d_x + 1):
            for eta in range(Z + 1):
                count, bound = count_consistent_scopes(d_x, eta, Z)
                if count != len(enumerate_consistent_scopes(d_x, range(eta), Z)) or count > bound:
                    return False
    return True


CHECKS: dict[str, Callable[[], bool]] = {
    "fixtures are valid and flatten to stochastic rows": check_fixtures,
    "backward induction matches policy enumeration": check_planner,
    "hyper-posterior matches closed-form evidence": check_conjugacy,
    "consistent scope counts match enumeration": check_counting,
}


def run_checks() -> dict[str, bool]:
    return {name: bool(fn()) for name, fn in CHECKS.items()}
