"""Offline service-chain placement by LP relaxation and rounding.

``offline_round`` solves the fractional relaxation, then repeatedly
forbids fractional variables whose value falls below a threshold and
re-solves until every flow follows a single integral path. The
threshold starts at ``eps0`` and is raised by ``next_threshold`` only
when nothing lies below it, which guarantees at least one variable is
forbidden per iteration. If forbidding leaves a flow with no path, the
flow's largest-fraction forbidden variable is restored and protected
from future forbids.

Small instances run the loop on the faithful per-flow edge model,
whose LP is re-solved jointly each iteration. Large instances switch
to an aggregated rendering with the same optimum: traffic is pooled
per SDM kind (exact for the relaxation, because consecutive chain
positions are completely connected), every option's share of its
kind's traffic stands in for the per-flow fractional values - options
below the threshold are forbidden for everyone at once, a kind whose
options all fall below it keeps its largest carrier - and each flow is
then re-placed integrally against the evolving background load, with
improvement sweeps to a local fixed point. This keeps the iteration
count bounded by the option count rather than the flow count while
preserving how the threshold trades balance for concentration.
"""

from __future__ import annotations

import copy

import numpy as np

from ..errors import (Infeasible, InfeasibleFlow, NonConvergence,
                      ValidationError)
from .model import (INTEGRALITY_TOL, build_edge_model, flow_connected,
                    flow_options, fractional_edges, kind_totals,
                    solve_flow_marginals, solve_kind_spread, walk_paths)
from .problem import Assignment, Flow, SchedulingProblem, make_assignment

MAX_ITERATIONS = 1000
DEFAULT_EPSILON = 0.2
# Above this many edge variables the aggregated path takes over.
EDGE_MODEL_VAR_LIMIT = 2500
POLISH_SWEEP_LIMIT = 8


def next_threshold(current: float, fractional_values) -> float:
    """Raise the threshold just enough to forbid at least one value."""
    values = [v for v in fractional_values if v > INTEGRALITY_TOL]
    if not values:
        return current
    if min(values) < current:
        return current
    return max(current, min(values) + 1e-9)


def _edge_variable_count(problem: SchedulingProblem) -> int:
    total = 0
    for flow in problem.flows:
        counts = [len(problem.options(sdm_id)) for sdm_id in flow.chain]
        if not counts:
            continue
        total += counts[0] + counts[-1]
        total += sum(a * b for a, b in zip(counts, counts[1:]))
    return total


def with_background(problem: SchedulingProblem,
                    background: np.ndarray) -> SchedulingProblem:
    """Copy of the problem with prior utilization replaced wholesale.

    Committed traffic from already-placed flows may push utilization
    past 1, which the input validator rejects; this bypasses it for
    internal re-solves.
    """
    shadow = copy.copy(problem)
    shadow.gamma = np.asarray(background, dtype=float).reshape(
        problem.n_boxes, problem.n_resources)
    return shadow


def offline_round(problem: SchedulingProblem,
                  eps0: float = DEFAULT_EPSILON) -> Assignment:
    if not 0.0 < eps0 < 1.0:
        raise ValidationError("epsilon must lie strictly between 0 and 1")
    if _edge_variable_count(problem) <= EDGE_MODEL_VAR_LIMIT:
        placements = _round_edge_model(problem, eps0)
        # Post-extraction improvement sweeps over the full option sets;
        # the rounding already fixed every path, this only ever lowers
        # the exact objective.
        full = {
            flow.id: [list(range(len(problem.options(s))))
                      for s in flow.chain]
            for flow in problem.flows}
        placements = _polish(problem, placements, full)
    else:
        placements = _round_aggregated(problem, eps0)
    return make_assignment(problem, placements)


def _placements_to_choices(problem: SchedulingProblem,
                           placements: dict) -> dict[str, list[int]]:
    choices: dict[str, list[int]] = {}
    for flow in problem.flows:
        per_flow = []
        for p, impl_id, box_id in placements[flow.id]:
            opts = problem.options(flow.chain[p])
            sdm = problem.sdms[problem.sdm_index[flow.chain[p]]]
            i = next(idx for idx, im in enumerate(sdm.impls)
                     if im.id == impl_id)
            n = problem.box_index[box_id]
            per_flow.append(opts.index((i, n)))
        choices[flow.id] = per_flow
    return choices


def _choices_to_placements(problem: SchedulingProblem,
                           choices: dict[str, list[int]]) -> dict:
    placements: dict[str, list[tuple[int, str, str]]] = {}
    for flow in problem.flows:
        hops = []
        for p, sdm_id in enumerate(flow.chain):
            opts = problem.options(sdm_id)
            i, n = opts[choices[flow.id][p]]
            sdm = problem.sdms[problem.sdm_index[sdm_id]]
            hops.append((p, sdm.impls[i].id, problem.boxes[n].id))
        placements[flow.id] = hops
    return placements


def _choice_contribution(problem: SchedulingProblem, flow: Flow,
                         picked: list[int]) -> np.ndarray:
    contribution = np.zeros((problem.n_boxes, problem.n_resources))
    for p, sdm_id in enumerate(flow.chain):
        opts = problem.options(sdm_id)
        i, n = opts[picked[p]]
        k = problem.sdm_index[sdm_id]
        contribution[n] += flow.amount * problem.demand[k][i] \
            / problem.omega[n]
    return contribution


def _polish(problem: SchedulingProblem, placements: dict,
            allowed_sets: dict[str, list[list[int]]]) -> dict:
    """Deterministic single-flow improvement sweeps to a fixed point."""
    choices = _placements_to_choices(problem, placements)
    contribution = {f.id: _choice_contribution(problem, f, choices[f.id])
                    for f in problem.flows}
    load = problem.gamma + sum(contribution.values(),
                               np.zeros((problem.n_boxes,
                                         problem.n_resources)))
    for _ in range(POLISH_SWEEP_LIMIT):
        changed = False
        for flow in problem.flows:
            load -= contribution[flow.id]
            picked, contrib = greedy_place(problem, flow,
                                           allowed_sets[flow.id], load)
            old_peak = float((load + contribution[flow.id]).max())
            new_peak = float((load + contrib).max())
            if picked != choices[flow.id] and new_peak < old_peak - 1e-12:
                choices[flow.id] = picked
                contribution[flow.id] = contrib
                changed = True
            load += contribution[flow.id]
        if not changed:
            break
    return _choices_to_placements(problem, choices)


# ------------------------------------------------------ edge-model path


def _rollback_edge(flow: Flow, forbidden: dict, protected: set) -> None:
    candidates = [(v, k) for k, v in forbidden.items() if k[0] == flow.id]
    if not candidates:
        raise Infeasible(f"flow {flow.id} has no feasible path")
    candidates.sort(key=lambda t: (-t[0], t[1]))
    _, key = candidates[0]
    del forbidden[key]
    protected.add(key)


def _round_edge_model(problem: SchedulingProblem, eps0: float):
    forbidden: dict[tuple, float] = {}   # key -> fraction when forbidden
    protected: set[tuple] = set()
    eps = eps0
    all_options = {f.id: flow_options(problem, f) for f in problem.flows}
    for _ in range(MAX_ITERATIONS):
        for flow in problem.flows:
            while not flow_connected(flow, all_options[flow.id],
                                     frozenset(forbidden)):
                _rollback_edge(flow, forbidden, protected)
        model = build_edge_model(problem, frozenset(forbidden))
        _, values, _ = model.solve()
        fractional = fractional_edges(values)
        if not fractional:
            return walk_paths(problem, model.options, values)
        eps = next_threshold(eps, fractional.values())
        newly = sorted(k for k, v in fractional.items()
                       if v < eps and k not in protected)
        if not newly:
            unprotected = {k: v for k, v in fractional.items()
                           if k not in protected}
            if not unprotected:
                # Every fractional variable is protected; commit to the
                # largest-weight path of each flow.
                return walk_paths(problem, model.options, values)
            eps = min(unprotected.values()) + 1e-9
            newly = sorted(k for k, v in unprotected.items() if v < eps)
        for key in newly:
            forbidden[key] = fractional[key]
    raise NonConvergence("rounding failed to reach an integral solution")


# ------------------------------------------------- aggregated-kind path


def place_single_flow(problem: SchedulingProblem, flow: Flow,
                      background: np.ndarray, eps0: float,
                      exclude_boxes: frozenset[str] = frozenset()
                      ) -> tuple[list[tuple[int, str, str]], np.ndarray]:
    """Place one flow against a fixed background load.

    Solves the flow's fractional per-position marginals, keeps options
    carrying at least ``eps0`` of the flow (or the largest carrier when
    none does), and picks integrally among them by min-peak greedy.
    Returns the hops and the flow's load contribution.
    """
    allowed: list[list[int]] = []
    for sdm_id in flow.chain:
        opts = problem.options(sdm_id)
        keep = [j for j, (i, n) in enumerate(opts)
                if problem.boxes[n].id not in exclude_boxes]
        if not keep:
            raise InfeasibleFlow(
                f"flow {flow.id}: no eligible box for {sdm_id}")
        allowed.append(keep)
    if flow.chain:
        z_star, marginals = solve_flow_marginals(problem, flow, allowed,
                                                 background)
        bg_peak = float(background.max()) if background.size else 0.0
        # The relaxation constrains the placement only when the flow
        # actually raises the peak; otherwise every split is optimal,
        # the marginals are an arbitrary vertex, and thresholding them
        # would restrict the greedy choice to noise.
        if z_star > bg_peak + 1e-9:
            # Restrict a position only to options that are true
            # carriers: they hold the threshold fraction AND committing
            # the whole flow there stays near the relaxed optimum. A
            # fraction can legitimately sit on an option whose integral
            # commitment would blow past the optimum (it rode that
            # option's feasibility ceiling); restricting to such an
            # option, or to the largest of scattered sub-threshold
            # slivers, would chase an arbitrary vertex corner, so those
            # positions stay unrestricted instead.
            ceiling = max(z_star, bg_peak) * 1.05 + 1e-9
            restricted = []
            for p, per_pos in enumerate(marginals):
                opts = problem.options(flow.chain[p])
                k = problem.sdm_index[flow.chain[p]]
                keep = []
                for j in sorted(per_pos):
                    if per_pos[j] < eps0:
                        continue
                    i, n = opts[j]
                    delta = flow.amount * problem.demand[k][i] \
                        / problem.omega[n]
                    if float((background[n] + delta).max()) <= ceiling:
                        keep.append(j)
                restricted.append(keep if keep else allowed[p])
            allowed = restricted
    choices, contribution = greedy_place(problem, flow, allowed, background)
    hops = []
    for p, sdm_id in enumerate(flow.chain):
        i, n = problem.options(sdm_id)[choices[p]]
        sdm = problem.sdms[problem.sdm_index[sdm_id]]
        hops.append((p, sdm.impls[i].id, problem.boxes[n].id))
    return hops, contribution


def greedy_place(problem: SchedulingProblem, flow: Flow,
                 allowed: list[list[int]], load: np.ndarray
                 ) -> tuple[list[int], np.ndarray]:
    """Integral min-peak placement of one flow against a fixed load.

    Chooses, position by position, the allowed option that keeps the
    resulting maximum (box, resource) utilization lowest, ties broken
    by the lowest option index. Returns the chosen option index per
    position and the flow's total load contribution.
    """
    contribution = np.zeros_like(load)
    current = load + contribution
    choices: list[int] = []
    for p, sdm_id in enumerate(flow.chain):
        opts = problem.options(sdm_id)
        k = problem.sdm_index[sdm_id]
        # The global peak is max(base, local) where local is the chosen
        # box's resulting hottest-resource utilization, so minimizing
        # local minimizes the global peak while still spreading load
        # among options that tie below it.
        best_j = -1
        best_local = np.inf
        for j in allowed[p]:
            i, n = opts[j]
            delta = flow.amount * problem.demand[k][i] / problem.omega[n]
            local = float((current[n] + delta).max())
            if local < best_local - 1e-15:
                best_local = local
                best_j = j
        i, n = opts[best_j]
        delta = flow.amount * problem.demand[k][i] / problem.omega[n]
        contribution[n] += delta
        current[n] += delta
        choices.append(best_j)
    return choices, contribution


def _survivor_options(problem: SchedulingProblem, eps0: float
                      ) -> dict[int, list[int]]:
    """Per-kind options whose share of the kind's traffic is >= eps0.

    The relaxation is read as an interior solution in which every
    option carries a positive fraction, so every option below the
    threshold is forbidden in the first iteration. A kind whose every
    option falls below the threshold keeps its largest carrier (the
    rollback rule), so no kind is ever left without an option.
    """
    totals = kind_totals(problem)
    _, w = solve_kind_spread(problem)
    survivors: dict[int, list[int]] = {}
    for k in sorted(problem.sdm_index.values()):
        opts = problem.options(problem.sdms[k].id)
        total = totals.get(k, 0.0)
        if total <= 0.0:
            survivors[k] = list(range(len(opts)))
            continue
        shares = [w.get((k, i, n), 0.0) / total for (i, n) in opts]
        keep = [j for j, s in enumerate(shares) if s >= eps0]
        if not keep:
            largest = max(range(len(opts)), key=lambda j: (shares[j], -j))
            keep = [largest]
        survivors[k] = keep
    return survivors


def _round_aggregated(problem: SchedulingProblem, eps0: float):
    if len(problem.flows) == 1:
        flow = problem.flows[0]
        hops, _ = place_single_flow(problem, flow, problem.gamma, eps0)
        return {flow.id: hops}
    survivors = _survivor_options(problem, eps0)
    allowed_sets = {
        flow.id: [sorted(survivors[problem.sdm_index[s]])
                  for s in flow.chain]
        for flow in problem.flows}

    load = problem.gamma.copy()
    choices: dict[str, list[int]] = {}
    for flow in problem.flows:
        picked, contrib = greedy_place(problem, flow,
                                       allowed_sets[flow.id], load)
        choices[flow.id] = picked
        load += contrib

    placements = _choices_to_placements(problem, choices)
    return _polish(problem, placements, allowed_sets)
