"""Benchmark environments: random factored MDPs and a factored Taxi."""
from __future__ import annotations

from math import prod

import numpy as np

from .errors import ContractError, InfeasiblePriorError
from .fmdp import Fmdp
from .graph import CausalGraph, radix_weights

# Taxi action codes, same order as the Gym environment.
SOUTH, NORTH, EAST, WEST, PICKUP, DROPOFF = range(6)
TAXI_ROW, TAXI_COL, TAXI_PASSENGER, TAXI_DEST, TAXI_ACTION = range(5)


def random_fmdp(d_x: int = 9, d_y: int = 6, Z: int = 5, N: int = 2, H: int = 100,
                rng: np.random.Generator | None = None,
                min_parents: int = 2) -> tuple[Fmdp, CausalGraph]:
    """Draw a Z-sparse graph and an FMDP from the flat prior over its parameters.

    Each factor gets between ``min_parents`` and ``Z`` parents, chosen without
    replacement; transition rows are Dirichlet(1, ..., 1), mean rewards are
    Uniform[0, 1] and the initial distribution is uniform.
    """
    rng = np.random.default_rng() if rng is None else rng
    if not d_y < d_x:
        raise ContractError("need at least one action variable (d_y < d_x)")
    if not 2 <= min_parents <= Z <= d_x:
        raise ContractError(f"need 2 <= min_parents <= Z <= d_x, got {min_parents}, {Z}, {d_x}")
    if N < 1 or H < 1:
        raise ContractError("N and H must be positive")
    parents = []
    for _ in range(d_y):
        size = int(rng.integers(min_parents, Z + 1))
        parents.append(tuple(sorted(int(i) for i in rng.choice(d_x, size, replace=False))))
    graph = CausalGraph(d_x, d_y, tuple(parents))
    trans, rews = [], []
    for z in graph.parents:
        rows = N ** len(z)
        trans.append(rng.dirichlet(np.ones(N), size=rows))
        rews.append(rng.random(rows))
    S = N ** d_y
    f = Fmdp(graph, (N,) * d_x, d_x - d_y, tuple(trans), tuple(rews),
             np.full(S, 1.0 / S), H, Z=Z)
    return f, graph


def reveal_prior(true_graph: CausalGraph, eta: int, rng: np.random.Generator,
                 clip: bool = False) -> CausalGraph:
    """Keep a uniformly chosen subset of ``eta`` true parents per factor.

    With ``clip`` a factor with fewer than ``eta`` parents keeps all of them.
    """
    if eta < 0:
        raise ContractError("eta must be non-negative")
    parents = []
    for j, z in enumerate(true_graph.parents):
        k = eta
        if len(z) < eta:
            if not clip:
                raise InfeasiblePriorError(
                    f"factor {j} has {len(z)} parents, cannot reveal {eta}")
            k = len(z)
        picked = rng.choice(len(z), k, replace=False) if k else []
        parents.append(tuple(sorted(z[int(i)] for i in picked)))
    return CausalGraph(true_graph.d_x, true_graph.d_y, tuple(parents))


def make_taxi(rows: int = 3, cols: int = 3, H: int = 10,
              source: tuple[int, int] = (0, 0),
              destination: tuple[int, int] | None = None) -> tuple[Fmdp, CausalGraph]:
    """Factored Taxi with a fixed passenger source and a fixed destination.

    State features: taxi row, taxi column, passenger-in-taxi flag and a
    constant destination feature (support 1).  One action feature with six
    values.  Moves clamp at the border.  A successful dropoff pays 1 on the
    passenger factor and empties the taxi; every other reward is 0.  The taxi
    starts empty at a uniformly random cell.
    """
    if rows < 2 or cols < 2:
        raise ContractError("taxi grid must be at least 2x2")
    source = tuple(source)
    destination = (0, cols - 1) if destination is None else tuple(destination)
    for r, c in (source, destination):
        if not (0 <= r < rows and 0 <= c < cols):
            raise ContractError("source/destination outside the grid")
    supports = (rows, cols, 2, 1, 6)
    graph = CausalGraph(5, 4, (
        (TAXI_ROW, TAXI_ACTION),
        (TAXI_COL, TAXI_ACTION),
        (TAXI_ROW, TAXI_COL, TAXI_PASSENGER, TAXI_ACTION),
        (TAXI_DEST,),
    ))

    def table(z, fn, n_out):
        sup = [supports[i] for i in z]
        T = np.zeros((prod(sup), n_out))
        R = np.zeros(prod(sup))
        for idx, vals in enumerate(np.ndindex(*sup)):
            nxt, rew = fn(*vals)
            T[idx, nxt] = 1.0
            R[idx] = rew
        return T, R

    def row_fn(r, a):
        if a == SOUTH:
            r = min(r + 1, rows - 1)
        elif a == NORTH:
            r = max(r - 1, 0)
        return r, 0.0

    def col_fn(c, a):
        if a == EAST:
            c = min(c + 1, cols - 1)
        elif a == WEST:
            c = max(c - 1, 0)
        return c, 0.0

    def passenger_fn(r, c, p, a):
        if a == PICKUP and p == 0 and (r, c) == source:
            return 1, 0.0
        if a == DROPOFF and p == 1 and (r, c) == destination:
            return 0, 1.0
        return p, 0.0

    tables = [table(graph.parents[0], row_fn, rows),
              table(graph.parents[1], col_fn, cols),
              table(graph.parents[2], passenger_fn, 2),
              table(graph.parents[3], lambda d: (d, 0.0), 1)]
    S = rows * cols * 2
    mu = np.zeros((rows, cols, 2, 1))
    mu[:, :, 0, 0] = 1.0 / (rows * cols)
    f = Fmdp(graph, supports, 1, tuple(t for t, _ in tables),
             tuple(r for _, r in tables), mu.reshape(S), H, Z=5)
    return f, graph


def taxi_state(f: Fmdp, row: int, col: int, carrying: int = 0) -> int:
    return int(np.dot(radix_weights(f.state_supports), (row, col, carrying, 0)))


def discovery_fixture(H: int = 5, fidelity: float = 0.8) -> tuple[Fmdp, CausalGraph]:
    """Small FMDP where every true edge carries value.

    Two binary state features and one binary action.  ``x0' = x0 xor a`` and
    ``x1' = x1 xor x0``, each with probability ``fidelity`` (otherwise the
    opposite value); factor 1 pays 1 while ``x1 == 1``.  Dropping any edge
    removes the agent's ability to steer ``x1``, so the optimal value of every
    proper subgraph is strictly lower.
    """
    graph = CausalGraph(3, 2, ((0, 2), (0, 1)))
    q = float(fidelity)
    t0 = np.zeros((4, 2))
    t1 = np.zeros((4, 2))
    r1 = np.zeros(4)
    for x0 in range(2):
        for a in range(2):
            v = x0 ^ a
            t0[2 * x0 + a, v] = q
            t0[2 * x0 + a, 1 - v] = 1 - q
        for x1 in range(2):
            v = x1 ^ x0
            t1[2 * x0 + x1, v] = q
            t1[2 * x0 + x1, 1 - v] = 1 - q
            r1[2 * x0 + x1] = float(x1 == 1)
    f = Fmdp(graph, (2, 2, 2), 1, (t0, t1), (np.zeros(4), r1),
             np.full(4, 0.25), H, Z=3)
    return f, graph


ENV_DEFAULTS = {
    "random_fmdp": {"d_x": 9, "d_y": 6, "Z": 5, "N": 2, "H": 100},
    "taxi3": {"rows": 3, "cols": 3, "H": 10},
    "taxi5": {"rows": 5, "cols": 5, "H": 15},
    "discovery": {"H": 5, "fidelity": 0.8},
}


def make_env(name: str, params: dict | None = None,
             rng: np.random.Generator | None = None) -> tuple[Fmdp, CausalGraph]:
    """Build a named environment; ``params`` override the defaults."""
    if name not in ENV_DEFAULTS:
        raise ContractError(f"unknown environment {name!r}; known: {sorted(ENV_DEFAULTS)}")
    kw = {**ENV_DEFAULTS[name], **(params or {})}
    if name == "random_fmdp":
        return random_fmdp(rng=rng, **kw)
    if name in ("taxi3", "taxi5"):
        return make_taxi(**kw)
    return discovery_fixture(**kw)
