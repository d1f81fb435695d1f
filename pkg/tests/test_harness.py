import json

import numpy as np
import pytest

from cpsrl.agents import make_fpsrl
from cpsrl.cli import main
from cpsrl.envs import discovery_fixture
from cpsrl.errors import ContractError
from cpsrl.fmdp import TabularMdp, flatten
from cpsrl.graph import is_subgraph
from cpsrl.harness import (
    CSV_FIELDS,
    ExperimentConfig,
    Reference,
    extract_discovered_graph,
    mean_ci,
    model_error_l1,
    parse_seed_range,
    per_episode_regret,
    read_csv,
    rows_to_csv,
    run_experiment,
    run_single,
    summarize,
    supergraph_flags,
)
from cpsrl.planner import backward_induction, brute_force_optimal

from helpers import random_small_fmdp


def small_config(**kw):
    base = dict(env="random_fmdp", agents=[{"kind": "cpsrl"}, {"kind": "psrl"}], K=3,
                seeds=[0, 1], env_params={"d_x": 4, "d_y": 3, "Z": 3, "H": 4})
    base.update(kw)
    return ExperimentConfig(**base)


def two_state_fixture():
    # a=0 stays, a=1 swaps; reward 1 in state 1 under a=0, nothing else
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = P[1, 0, 1] = 1.0
    P[0, 1, 1] = P[1, 1, 0] = 1.0
    R = np.array([[0.0, 0.0], [1.0, 0.0]])
    return TabularMdp(P, R, np.array([0.5, 0.5]), 2)


def test_regret_of_optimal_policy_is_zero(rng):
    f = random_small_fmdp(rng, H=4)
    pi, _ = backward_induction(flatten(f))
    assert per_episode_regret(f, pi) == 0.0


def test_regret_two_state_hand_computed():
    m = two_state_fixture()
    assert brute_force_optimal(m) == pytest.approx(1.5)
    # always swap: never collects the reward
    assert per_episode_regret(m, np.ones((2, 2), dtype=int)) == pytest.approx(1.5)
    # always stay: only state 1 collects, twice
    assert per_episode_regret(m, np.zeros((2, 2), dtype=int)) == pytest.approx(0.5)


def test_regret_bounded_by_horizon_times_factors(rng):
    for _ in range(20):
        f = random_small_fmdp(rng, H=3)
        pi = rng.integers(0, f.A, size=(f.H, f.S))
        assert 0.0 <= per_episode_regret(f, pi) <= f.d_y * f.H


def test_model_error_examples(rng):
    f = random_small_fmdp(rng)
    assert model_error_l1(f, f) == 0.0
    S = 3
    a = np.zeros((S, 1, S))
    b = np.zeros((S, 1, S))
    a[:, 0, 0] = 1.0
    b[:, 0, 1] = 1.0
    mu = np.ones(S) / S
    assert model_error_l1(TabularMdp(a, np.zeros((S, 1)), mu, 1),
                          TabularMdp(b, np.zeros((S, 1)), mu, 1)) == 2.0


def test_model_error_factored_matches_per_row_oracle(rng):
    f, g = random_small_fmdp(rng), random_small_fmdp(rng)
    pf, pg = flatten(f).P, flatten(g).P
    oracle = np.mean([np.abs(pf[s, a] - pg[s, a]).sum()
                      for s in range(f.S) for a in range(f.A)])
    assert model_error_l1(f, g) == pytest.approx(oracle, abs=1e-12)
    assert model_error_l1(Reference.of(f), g) == pytest.approx(oracle, abs=1e-12)


def test_model_error_shape_mismatch(rng):
    with pytest.raises(ContractError):
        model_error_l1(random_small_fmdp(rng, d_s=2), random_small_fmdp(rng, d_s=3))


def test_row_count_and_prefix_sums():
    rows, summary = run_experiment(small_config())
    assert len(rows) == 12
    assert summary["errors"] == []
    assert [(r.algorithm, r.seed, r.episode) for r in rows] == [
        (a, s, k) for a in ("cpsrl(eta=2)", "psrl") for s in (0, 1) for k in (1, 2, 3)]
    for i in range(0, 12, 3):
        run = rows[i:i + 3]
        total = 0.0
        for r in run:
            total += r.per_episode_regret
            assert r.cumulative_regret == total
            assert r.per_episode_regret >= -1e-9


def test_byte_identical_csv(tmp_path):
    cfg = small_config()
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert a.startswith((",".join(CSV_FIELDS) + "\n").encode())
    assert b"\r\n" not in a


def test_csv_round_trip(tmp_path):
    rows, _ = run_experiment(small_config(), tmp_path)
    assert read_csv(tmp_path / "metrics.csv") == rows
    assert rows_to_csv(read_csv(tmp_path / "metrics.csv")) == rows_to_csv(rows)


def test_run_independent_of_other_runs():
    alone, _ = run_experiment(small_config(agents=[{"kind": "psrl"}], seeds=[1]))
    both, _ = run_experiment(small_config())
    assert alone == [r for r in both if r.algorithm == "psrl" and r.seed == 1]


def test_failed_run_is_recorded_and_others_proceed():
    # two revealed parents cannot fit under Z=1
    cfg = small_config(agents=[{"kind": "cpsrl", "Z": 1}, {"kind": "psrl"}], seeds=[0])
    rows, summary = run_experiment(cfg)
    assert {r.algorithm for r in rows} == {"psrl"}
    assert len(summary["errors"]) == 1
    assert summary["errors"][0]["algorithm"] == "cpsrl(eta=2)"


def test_summary_confidence_interval():
    m, c = mean_ci([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5
    assert c == pytest.approx(1.96 * np.std([1, 2, 3, 4], ddof=1) / 2)
    rows, _ = run_experiment(small_config())
    s = summarize(rows, 3)
    assert set(s) == {"cpsrl(eta=2)", "psrl"}
    assert len(s["psrl"]["curves"]["cumulative_regret"]["mean"]) == 3


def test_config_parsing(tmp_path):
    assert parse_seed_range("0..3") == [0, 1, 2, 3]
    assert parse_seed_range("4,7") == [4, 7]
    cfg = ExperimentConfig.from_dict({"env": "taxi3", "agents": [{"kind": "psrl"}], "K": 2,
                                      "seeds": {"start": 2, "stop": 4}})
    assert cfg.seeds == [2, 3]
    with pytest.raises(ContractError):
        ExperimentConfig.from_dict({"env": "taxi3", "agents": [], "K": 2, "colour": 1})
    with pytest.raises(ContractError):
        small_config(K=0)
    with pytest.raises(ContractError):
        small_config(agents=[{"kind": "psrl"}, {"kind": "psrl"}])


def test_discovery_with_fpsrl_returns_true_graph():
    env, g = discovery_fixture()
    agent = make_fpsrl(g, env.supports, env.H, env.mu)
    rng = np.random.default_rng(0)
    logs = [agent.run_episode(env, rng) for _ in range(6)]
    found = extract_discovered_graph(logs, rng, g)
    assert found.graph == g
    assert found.supergraph_fraction == 1.0
    assert extract_discovered_graph(logs, rng).graph == g
    with pytest.raises(ContractError):
        extract_discovered_graph([], rng)


def test_discovered_graph_is_sparse_and_flags_match():
    cfg = ExperimentConfig(env="discovery", agents=[{"kind": "cpsrl"}], K=12, seeds=[0], eta=0)
    _, logs, g = run_single(cfg, cfg.agents[0], 0, keep_logs=True)
    flags = supergraph_flags(logs, g)
    assert len(flags) == 12
    for lg, flag in zip(logs, flags):
        sampled = lg.sampled_graph(3)
        assert sampled.sparseness <= 3
        assert flag == is_subgraph(g, sampled)
    found = extract_discovered_graph(logs, np.random.default_rng(1), g)
    assert found.supergraph_fraction == pytest.approx(flags.mean())


def write_config(tmp_path, **kw):
    data = {"env": "taxi3", "agents": [{"kind": "cpsrl"}, {"kind": "psrl"}], "K": 2,
            "seeds": [0]}
    data.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return path


def test_cli_run_and_sweep(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    assert len(read_csv(tmp_path / "run" / "metrics.csv")) == 4
    assert main(["--mode", "paper-literal", "sweep", "--config", str(cfg),
                 "--seeds", "1..3", "--out", str(tmp_path / "sweep")]) == 0
    rows = read_csv(tmp_path / "sweep" / "metrics.csv")
    assert sorted({r.seed for r in rows}) == [1, 2, 3]
    summary = json.loads((tmp_path / "sweep" / "summary.json").read_text())
    assert summary["config"]["mode"] == "paper-literal"


def test_cli_seed_env_override(tmp_path, monkeypatch):
    cfg = write_config(tmp_path)
    monkeypatch.setenv("CPSRL_SEEDS", "5..6")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert sorted({r.seed for r in read_csv(tmp_path / "o" / "metrics.csv")}) == [5, 6]


def test_cli_discover_and_validate(tmp_path, capsys):
    cfg = write_config(tmp_path, env="discovery", agents=[{"kind": "cpsrl"}], K=4, eta=0)
    out = tmp_path / "graph.json"
    assert main(["discover", "--config", str(cfg), "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["graph"]["d_x"] == 3 and len(data["graph"]["parents"]) == 2
    assert 1 <= data["episode"] <= 4
    assert main(["validate"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_cli_bad_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    cfg = write_config(tmp_path, agents=[{"kind": "psrl"}])
    assert main(["discover", "--config", str(cfg)]) == 2
