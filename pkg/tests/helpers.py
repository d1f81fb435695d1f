import numpy as np

from cpsrl.fmdp import Fmdp
from cpsrl.graph import CausalGraph


def random_small_fmdp(rng, d_s=2, d_a=1, N=2, max_parents=2, H=3):
    """Random factored MDP on ``d_s`` state and ``d_a`` action features."""
    d_x = d_s + d_a
    parents = []
    for _ in range(d_s):
        k = int(rng.integers(1, max_parents + 1))
        parents.append(tuple(sorted(rng.choice(d_x, k, replace=False).tolist())))
    g = CausalGraph(d_x, d_s, tuple(parents))
    trans = [rng.dirichlet(np.ones(N), size=N ** len(z)) for z in g.parents]
    rews = [rng.random(N ** len(z)) for z in g.parents]
    S = N ** d_s
    mu = rng.dirichlet(np.ones(S))
    return Fmdp(g, (N,) * d_x, d_a, tuple(trans), tuple(rews), mu, H)
