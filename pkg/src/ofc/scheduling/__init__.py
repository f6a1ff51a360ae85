"""Service-chain placement: LP relaxation, rounding, online, oracle."""

from .model import (build_edge_model, build_kind_model, lp_lower_bound,
                    solve_flow_marginals)
from .offline import (DEFAULT_EPSILON, next_threshold, offline_round,
                      with_background)
from .online import OnlineScheduler, enumerate_best, online_schedule, \
    path_count
from .oracle import brute_force_optimal
from .problem import (Assignment, Box, Flow, Impl, SchedulingProblem, Sdm,
                      check_assignment, loads, make_assignment, objective)
from .simplex import SimplexResult, solve

__all__ = [
    "Assignment", "Box", "DEFAULT_EPSILON", "Flow", "Impl",
    "OnlineScheduler", "SchedulingProblem", "Sdm", "SimplexResult",
    "brute_force_optimal", "build_edge_model", "build_kind_model",
    "check_assignment", "enumerate_best", "loads", "lp_lower_bound",
    "make_assignment", "next_threshold", "objective", "offline_round",
    "online_schedule", "path_count", "solve", "solve_flow_marginals",
    "with_background",
]
