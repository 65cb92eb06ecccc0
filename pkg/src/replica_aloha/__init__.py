"""Replicated multi-channel slotted random access: exact per-slot success
combinatorics, feedback-based backlog estimation, access controllers, a
discrete-event simulator and large-system backlog bounds."""

from .asymptotics import (
    AsymptoteResult,
    UnstableLoadError,
    h1_limit,
    hk_fixed_point,
    hk_limit,
    lambert_w0,
)
from .engine import (
    Engine,
    ReplicatedMetrics,
    RunMetrics,
    SlotResult,
    SystemConfig,
    run,
    run_replicated,
)
from .estimator import (
    DegenerateObservationError,
    EstimatorInputs,
    SlotObservation,
    estimate_active_count,
    estimate_backlog,
    pseudo_likelihood,
    solve_mu,
)
from .occupancy import (
    NumericalInstabilityError,
    PolicyTable,
    SuccessParams,
    TableMismatchError,
    build_policy_table,
    load_policy_table,
    optimal_replicas,
    prob_all_occupied,
    prob_exactly_n_empty,
    prob_lost_given_empty,
    prob_success,
    save_policy_table,
)
from .policies import (
    A1State,
    ControlDecision,
    Controller,
    a1_decide,
    a1_update,
    ak_decide,
    ak_modified_decide,
    h1_decide,
    hk_decide,
    make_controller,
)

__version__ = "0.1.0"

__all__ = [
    "A1State",
    "AsymptoteResult",
    "ControlDecision",
    "Controller",
    "DegenerateObservationError",
    "Engine",
    "EstimatorInputs",
    "NumericalInstabilityError",
    "PolicyTable",
    "ReplicatedMetrics",
    "RunMetrics",
    "SlotObservation",
    "SlotResult",
    "SuccessParams",
    "SystemConfig",
    "TableMismatchError",
    "UnstableLoadError",
    "a1_decide",
    "a1_update",
    "ak_decide",
    "ak_modified_decide",
    "build_policy_table",
    "estimate_active_count",
    "estimate_backlog",
    "h1_decide",
    "h1_limit",
    "hk_decide",
    "hk_fixed_point",
    "hk_limit",
    "lambert_w0",
    "load_policy_table",
    "make_controller",
    "optimal_replicas",
    "prob_all_occupied",
    "prob_exactly_n_empty",
    "prob_lost_given_empty",
    "prob_success",
    "pseudo_likelihood",
    "run",
    "run_replicated",
    "save_policy_table",
    "solve_mu",
]
