"""Exhaustive optimum for small placement instances.

Searches every joint unsplittable assignment in lexicographic path
order with branch-and-bound pruning (loads only grow, so a partial
assignment whose peak already matches the incumbent cannot improve).
The first optimum encountered — the lexicographically smallest — wins.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..errors import InfeasibleFlow, TooLarge
from .online import path_count
from .problem import Assignment, SchedulingProblem, make_assignment

SEARCH_LIMIT = 1_000_000


def brute_force_optimal(problem: SchedulingProblem) -> Assignment:
    total = 1
    for flow in problem.flows:
        paths = path_count(problem, flow)
        if paths == 0 and flow.chain:
            raise InfeasibleFlow(
                f"flow {flow.id}: no eligible placement")
        total *= max(paths, 1)
        if total > SEARCH_LIMIT:
            raise TooLarge(
                f"joint path count exceeds {SEARCH_LIMIT}")

    flat_shape = problem.n_boxes * problem.n_resources
    per_flow: list[list[tuple[np.ndarray, list[tuple[int, str, str]]]]] = []
    for flow in problem.flows:
        blocks = [problem.option_loads(flow, sdm_id)
                  for sdm_id in flow.chain]
        option_lists = [problem.options(sdm_id) for sdm_id in flow.chain]
        paths = []
        for combo in itertools.product(
                *(range(len(o)) for o in option_lists)):
            delta = np.zeros(flat_shape)
            hops = []
            for p, j in enumerate(combo):
                delta += blocks[p][j]
                i, n = option_lists[p][j]
                sdm = problem.sdms[problem.sdm_index[flow.chain[p]]]
                hops.append((p, sdm.impls[i].id, problem.boxes[n].id))
            paths.append((delta, hops))
        per_flow.append(paths)

    base = problem.gamma.reshape(-1).copy()
    best_obj = np.inf
    best_choice: list[int] | None = None
    n_flows = len(problem.flows)
    choice = [0] * n_flows

    def search(idx: int, loads: np.ndarray) -> None:
        nonlocal best_obj, best_choice
        if loads.max(initial=0.0) >= best_obj - 1e-12:
            return
        if idx == n_flows:
            best_obj = float(loads.max(initial=0.0))
            best_choice = choice.copy()
            return
        for j, (delta, _) in enumerate(per_flow[idx]):
            choice[idx] = j
            search(idx + 1, loads + delta)

    search(0, base)
    if best_choice is None:
        # Every branch was pruned by the initial incumbent: only
        # possible when there are no flows.
        best_choice = []
    placements = {
        problem.flows[idx].id: per_flow[idx][best_choice[idx]][1]
        for idx in range(n_flows)}
    return make_assignment(problem, placements)
