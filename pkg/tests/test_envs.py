import numpy as np
import pytest

from cpsrl.envs import (
    DROPOFF,
    EAST,
    NORTH,
    PICKUP,
    WEST,
    discovery_fixture,
    make_env,
    make_taxi,
    random_fmdp,
    reveal_prior,
    taxi_state,
)
from cpsrl.errors import ContractError, InfeasiblePriorError
from cpsrl.fmdp import Fmdp, flatten, step, validate
from cpsrl.graph import CausalGraph, is_subgraph
from cpsrl.planner import backward_induction, optimal_value


def test_random_fmdp_sizes_and_validity():
    for seed in range(10):
        f, g = random_fmdp(d_x=9, d_y=6, Z=5, N=2, H=10, rng=np.random.default_rng(seed))
        assert all(2 <= len(z) <= 5 for z in g.parents)
        assert f.S == 64 and f.A == 8
        assert validate(f) == []


def test_random_fmdp_parent_counts_cover_range():
    seen = set()
    for seed in range(100):
        _, g = random_fmdp(d_x=9, d_y=6, Z=5, N=2, H=2, rng=np.random.default_rng(seed))
        seen.update(len(z) for z in g.parents)
    assert seen == {2, 3, 4, 5}


def test_random_fmdp_deterministic():
    a, _ = random_fmdp(H=5, rng=np.random.default_rng(3))
    b, _ = random_fmdp(H=5, rng=np.random.default_rng(3))
    assert a.to_json() == b.to_json()


def test_random_fmdp_parameter_errors():
    with pytest.raises(ContractError):
        random_fmdp(d_x=4, d_y=2, Z=5, rng=np.random.default_rng(0))
    with pytest.raises(ContractError):
        random_fmdp(d_x=4, d_y=4, Z=3, rng=np.random.default_rng(0))


def test_reveal_prior_examples(rng):
    g = CausalGraph(5, 2, ((0, 3), (1, 4)))
    assert reveal_prior(g, 2, rng) == g
    assert reveal_prior(g, 0, rng) == CausalGraph.empty(5, 2)
    for _ in range(20):
        _, t = random_fmdp(H=2, rng=rng)
        p = reveal_prior(t, 2, rng)
        assert is_subgraph(p, t)
        assert all(len(z) == 2 for z in p.parents)


def test_reveal_prior_infeasible(rng):
    g = CausalGraph(3, 2, ((0, 1), (2,)))
    with pytest.raises(InfeasiblePriorError):
        reveal_prior(g, 2, rng)
    clipped = reveal_prior(g, 2, rng, clip=True)
    assert clipped.parents == ((0, 1), (2,))


def test_reveal_prior_uniform_choice():
    g = CausalGraph(4, 1, ((0, 1, 2),))
    rng = np.random.default_rng(5)
    counts = {}
    n = 3000
    for _ in range(n):
        z = reveal_prior(g, 1, rng).parents[0]
        counts[z] = counts.get(z, 0) + 1
    assert set(counts) == {(0,), (1,), (2,)}
    sigma = np.sqrt(n * (1 / 3) * (2 / 3))
    assert all(abs(c - n / 3) < 4 * sigma for c in counts.values())


def test_taxi_sizes():
    f, g = make_taxi(3, 3, 10)
    assert (f.S, f.A) == (18, 6)
    assert f.supports == (3, 3, 2, 1, 6)
    assert g.sparseness == 4 and f.Z == 5
    f5, _ = make_taxi(5, 5, 15)
    assert f5.S == 50 and f5.supports == (5, 5, 2, 1, 6)
    assert validate(f) == [] and validate(f5) == []


def test_taxi_point_mass_rows():
    f, _ = make_taxi(5, 5, 15)
    for t in f.transitions:
        assert np.all(np.isin(t, (0.0, 1.0)))
        assert np.all(t.sum(axis=1) == 1.0)


def test_taxi_moves_and_walls(rng):
    f, _ = make_taxi(3, 3, 10)
    assert step(f, (0, 1, 0, 0, NORTH), rng)[0][:2] == (0, 1)
    assert step(f, (1, 0, 0, 0, WEST), rng)[0][:2] == (1, 0)
    assert step(f, (1, 2, 0, 0, EAST), rng)[0][:2] == (1, 2)
    assert step(f, (1, 1, 0, 0, EAST), rng)[0][:2] == (1, 2)


def test_taxi_pickup_and_dropoff(rng):
    f, _ = make_taxi(3, 3, 10)
    assert step(f, (0, 0, 0, 0, PICKUP), rng)[0][2] == 1
    assert step(f, (1, 1, 0, 0, PICKUP), rng)[0][2] == 0
    y, r = step(f, (0, 2, 1, 0, DROPOFF), rng)
    assert y[2] == 0 and r == (0.0, 0.0, 1.0, 0.0)
    y, r = step(f, (1, 2, 1, 0, DROPOFF), rng)
    assert y[2] == 1 and sum(r) == 0.0


def test_taxi_optimal_value_from_source_neighbour():
    f, _ = make_taxi(3, 3, 10)
    m = flatten(f)
    _, V = backward_induction(m)
    # one step from the source: move, pickup, two moves east, dropoff
    assert V[0, taxi_state(f, 1, 0)] >= 1.0
    assert optimal_value(m) >= 1.0
    short, _ = make_taxi(3, 3, 4)
    _, Vs = backward_induction(flatten(short))
    assert Vs[0, taxi_state(short, 1, 0)] == 0.0


def test_taxi_start_distribution():
    f, _ = make_taxi(5, 5, 15)
    assert f.mu.sum() == pytest.approx(1.0)
    for s in range(f.S):
        carrying = f.state_features[s][2]
        assert (f.mu[s] > 0) == (carrying == 0)


def test_taxi_bad_grid():
    with pytest.raises(ContractError):
        make_taxi(1, 3)
    with pytest.raises(ContractError):
        make_taxi(3, 3, source=(3, 0))


def test_discovery_fixture_every_edge_matters():
    f, g = discovery_fixture()
    assert validate(f) == []
    full = optimal_value(flatten(f))
    # removing any single edge and refitting that factor to its average row loses value
    for j, z in enumerate(g.parents):
        for drop in z:
            keep = tuple(i for i in z if i != drop)
            t = f.transitions[j].reshape(2, 2, 2)
            r = f.rewards[j].reshape(2, 2)
            axis = z.index(drop)
            tables = list(f.transitions)
            rewards = list(f.rewards)
            tables[j] = t.mean(axis=axis)
            rewards[j] = r.mean(axis=axis)
            sub = CausalGraph(3, 2, tuple(keep if k == j else p for k, p in enumerate(g.parents)))
            h = Fmdp(sub, f.supports, f.d_a, tuple(tables), tuple(rewards), f.mu, f.H, Z=3)
            assert optimal_value(flatten(h)) < full - 0.05


def test_make_env_names(rng):
    for name in ("random_fmdp", "taxi3", "taxi5", "discovery"):
        f, g = make_env(name, {"H": 3}, rng)
        assert f.H == 3 and validate(f) == []
    with pytest.raises(ContractError):
        make_env("gridworld")
