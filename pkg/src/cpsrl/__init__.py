"""Posterior sampling for factored MDPs with a partial causal graph prior."""
from .agents import (
    AgentConfig,
    CausalPSRL,
    EpisodeLog,
    TabularPSRL,
    build_agent,
    confidence_widths,
    make_cpsrl,
    make_fpsrl,
    make_psrl,
    regret_bound,
)
from .bayes import EXACT, LITERAL, Hierarchy, init_hierarchy, predictive_prob
from .envs import discovery_fixture, make_env, make_taxi, random_fmdp, reveal_prior
from .errors import ContractError, InfeasiblePriorError, SizeCapError
from .fmdp import Fmdp, TabularMdp, Transition, flatten, rollout, step, validate
from .graph import (
    CausalGraph,
    assignment_index,
    count_consistent_scopes,
    enumerate_consistent_scopes,
    is_subgraph,
    scope_select,
)
from .harness import (
    ExperimentConfig,
    extract_discovered_graph,
    model_error_l1,
    per_episode_regret,
    run_experiment,
)
from .planner import backward_induction, brute_force_optimal, evaluate_policy

__version__ = "0.1.0"
