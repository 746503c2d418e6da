"""Anytime two-sided bounds on maximal reachability probabilities in POMDPs.

The solver keeps a lower bound as a set of alpha-vectors (also the
executable policy) and an upper bound as simplex-corner values plus a
sawtooth point set, explores the belief MDP with loop-aware depth-first
trials over an incrementally built graph, and periodically runs exact value
iteration over that graph so upper bounds improve even inside end
components.  Both bounds are sound at every moment, so interrupting a solve
still yields a valid bracket on the optimum.
"""

from .bounds import (
    AlphaVector,
    LowerBoundSet,
    UpperBoundSet,
    backup_lower,
    backup_upper,
    init_lower_blind,
    init_upper_vmdp,
    lower_value,
    prune,
    q_upper,
    upper_value,
)
from .explore import (
    HeuristicConfig,
    NoAdmissibleAction,
    NoAdmissibleObservation,
    TrialState,
    explore,
    select_action,
    select_observation,
    weu,
)
from .graph import BeliefGraph, BeliefNode
from .models import (
    LoopFixture,
    ModelSyntaxError,
    build_family,
    generate_chain,
    generate_grid_av,
    generate_refuel,
    load_model,
    loop_fixture,
    parse_model,
    preset,
    save_model,
    serialize_model,
)
from .policy import AlphaPolicy, EmptyPolicy, SimReport, action_for, simulate
from .pomdp import (
    AugmentedPomdp,
    Belief,
    EmptyTargetSet,
    ModelValidationError,
    Pomdp,
    ReachboundError,
    ZeroProbabilityObservation,
    augment,
    belief_update,
    expected_reward,
    observation_prob,
    observation_probs,
    successor_beliefs,
)
from .solver import (
    NonMonotoneVI,
    SolveResult,
    SolverConfig,
    TraceRow,
    read_trace_csv,
    reset_and_vi,
    solve,
    trace_csv_text,
    write_trace_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AlphaPolicy", "AlphaVector", "AugmentedPomdp", "Belief", "BeliefGraph",
    "BeliefNode", "EmptyPolicy", "EmptyTargetSet", "HeuristicConfig",
    "LoopFixture", "LowerBoundSet", "ModelSyntaxError", "ModelValidationError",
    "NoAdmissibleAction", "NoAdmissibleObservation", "NonMonotoneVI", "Pomdp",
    "ReachboundError", "SimReport", "SolveResult", "SolverConfig", "TraceRow",
    "TrialState", "UpperBoundSet", "ZeroProbabilityObservation", "action_for",
    "augment", "backup_lower", "backup_upper", "belief_update", "build_family",
    "expected_reward", "explore", "generate_chain", "generate_grid_av",
    "generate_refuel", "init_lower_blind", "init_upper_vmdp", "load_model",
    "loop_fixture", "lower_value", "observation_prob", "observation_probs",
    "parse_model", "preset", "prune", "q_upper", "read_trace_csv",
    "reset_and_vi", "save_model", "select_action", "select_observation",
    "serialize_model", "simulate", "solve", "successor_beliefs",
    "trace_csv_text", "upper_value", "weu", "write_trace_csv",
]
