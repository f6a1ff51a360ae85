"""Per-flow (online) service-chain placement.

Flows arrive one at a time and are committed immediately: when the
flow's path count is small enough the best path is found by exact
enumeration against the committed utilization (ties to the
lexicographically first path), otherwise the flow is handed to the
offline rounding algorithm as a singleton problem whose prior
utilization includes everything committed so far. An optional batch
mode holds flows and places each batch with the offline algorithm.
"""

from __future__ import annotations

import numpy as np

from ..errors import InfeasibleFlow
from .offline import (DEFAULT_EPSILON, offline_round, place_single_flow,
                      with_background)
from .problem import (Assignment, Flow, SchedulingProblem, compute_traffic,
                      make_assignment)

ENUMERATION_LIMIT = 10_000


def path_count(problem: SchedulingProblem, flow: Flow) -> int:
    """Number of distinct (impl, box) paths through the flow's chain."""
    count = 1
    for sdm_id in flow.chain:
        count *= len(problem.options(sdm_id))
    return count


def enumerate_best(problem: SchedulingProblem, flow: Flow,
                   background: np.ndarray,
                   exclude_boxes: frozenset[str] = frozenset()
                   ) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Exact minimum-peak path by exhaustive enumeration.

    Returns the chosen (impl index, box index) per position and the
    flow's load contribution. Ties resolve to the lexicographically
    first path in option order.
    """
    flat = background.reshape(-1)
    option_lists = []
    delta_blocks = []
    for sdm_id in flow.chain:
        opts = problem.options(sdm_id, set(exclude_boxes) or None)
        if not opts:
            raise InfeasibleFlow(
                f"flow {flow.id}: no eligible box for {sdm_id}")
        option_lists.append(opts)
        delta_blocks.append(problem.option_loads(flow, sdm_id,
                                                 set(exclude_boxes) or None))
    totals = np.zeros((1, flat.size))
    for block in delta_blocks:
        totals = (totals[:, None, :] + block[None, :, :]).reshape(
            -1, flat.size)
    peaks = (flat[None, :] + totals).max(axis=1)
    best = int(np.argmin(peaks))          # first minimum = lexicographic
    shape = tuple(len(o) for o in option_lists)
    chosen = list(np.unravel_index(best, shape)) if shape else []
    picks = [option_lists[p][j] for p, j in enumerate(chosen)]
    contribution = totals[best].reshape(background.shape)
    return picks, contribution


class OnlineScheduler:
    """Sequential admission against committed utilization.

    ``admission_cap`` (optional) rejects a flow whose best placement
    would push any utilization above the cap; by default there is no
    cap and utilization may exceed 1. ``batch_window`` (optional)
    switches to batch mode: flows are held and placed together by the
    offline algorithm whenever the window fills or ``flush`` is called.
    """

    def __init__(self, problem: SchedulingProblem,
                 admission_cap: float | None = None,
                 batch_window: int | None = None,
                 eps0: float = DEFAULT_EPSILON):
        self.problem = problem
        self.admission_cap = admission_cap
        self.batch_window = batch_window
        self.eps0 = eps0
        self.committed = problem.gamma.copy()
        self.placements: dict[str, list[tuple[int, str, str]]] = {}
        self.contributions: dict[str, np.ndarray] = {}
        self.held: list[Flow] = []
        self.rejected: list[str] = []

    # ------------------------------------------------------- immediate

    def schedule(self, flow: Flow,
                 exclude_boxes: frozenset[str] = frozenset()
                 ) -> list[tuple[int, str, str]]:
        """Place one flow now; returns its hops and commits the load."""
        if self.batch_window is not None:
            self.held.append(flow)
            if len(self.held) >= self.batch_window:
                self.flush()
            return self.placements.get(flow.id, [])
        return self._place_now(flow, exclude_boxes)

    def _place_now(self, flow: Flow,
                   exclude_boxes: frozenset[str]) -> list:
        if path_count(self.problem, flow) <= ENUMERATION_LIMIT:
            picks, contribution = enumerate_best(
                self.problem, flow, self.committed, exclude_boxes)
            hops = []
            for p, (i, n) in enumerate(picks):
                sdm = self.problem.sdms[
                    self.problem.sdm_index[flow.chain[p]]]
                hops.append((p, sdm.impls[i].id,
                             self.problem.boxes[n].id))
        else:
            hops, contribution = self._fallback(flow, exclude_boxes)
        peak = float((self.committed + contribution).max())
        if (self.admission_cap is not None
                and peak > self.admission_cap + 1e-9):
            self.rejected.append(flow.id)
            raise InfeasibleFlow(
                f"flow {flow.id}: best placement exceeds admission cap")
        self.placements[flow.id] = hops
        self.contributions[flow.id] = contribution
        self.committed += contribution
        return hops

    def _fallback(self, flow: Flow, exclude_boxes: frozenset[str]):
        """Single-flow relaxation-and-round against the committed load."""
        return place_single_flow(self.problem, flow, self.committed,
                                 self.eps0, exclude_boxes)

    # ----------------------------------------------------------- batch

    def flush(self) -> None:
        """Place all held flows together with the offline algorithm."""
        if not self.held:
            return
        batch, self.held = self.held, []
        sub = SchedulingProblem(self.problem.boxes, self.problem.sdms,
                                batch)
        sub = with_background(sub, self.committed)
        assignment = offline_round(sub, self.eps0)
        for flow in batch:
            hops = assignment.placements[flow.id]
            contribution = np.zeros_like(self.committed)
            for p, impl_id, box_id in hops:
                k = self.problem.sdm_index[flow.chain[p]]
                sdm = self.problem.sdms[k]
                i = next(idx for idx, im in enumerate(sdm.impls)
                         if im.id == impl_id)
                n = self.problem.box_index[box_id]
                contribution[n] += flow.amount * self.problem.demand[k][i] \
                    / self.problem.omega[n]
            peak = float((self.committed + contribution).max())
            if (self.admission_cap is not None
                    and peak > self.admission_cap + 1e-9):
                self.rejected.append(flow.id)
                continue
            self.placements[flow.id] = hops
            self.contributions[flow.id] = contribution
            self.committed += contribution

    # ------------------------------------------------------ lifecycle

    def release(self, flow_id: str) -> None:
        """Remove a departed flow's committed load."""
        contribution = self.contributions.pop(flow_id, None)
        if contribution is not None:
            self.committed -= contribution
        self.placements.pop(flow_id, None)

    def peak(self) -> float:
        return float(self.committed.max())

    def assignment(self, problem: SchedulingProblem | None = None
                   ) -> Assignment:
        """Snapshot of everything currently committed."""
        source = problem if problem is not None else self.problem
        if problem is not None:
            return make_assignment(problem, dict(self.placements))
        return Assignment(dict(self.placements), self.peak(),
                          compute_traffic_safe(source, self.placements))


def compute_traffic_safe(problem: SchedulingProblem, placements
                         ) -> dict[tuple[str, str, str], float]:
    """Traffic aggregation tolerant of flows absent from the problem."""
    flow_by_id = {f.id: f for f in problem.flows}
    traffic: dict[tuple[str, str, str], float] = {}
    for fid, hops in placements.items():
        flow = flow_by_id.get(fid)
        if flow is None:
            continue
        for position, impl_id, box_id in hops:
            key = (flow.chain[position], impl_id, box_id)
            traffic[key] = traffic.get(key, 0.0) + flow.amount
    return traffic


def online_schedule(problem: SchedulingProblem,
                    order: str = "arrival",
                    admission_cap: float | None = None,
                    batch_window: int | None = None,
                    eps0: float = DEFAULT_EPSILON,
                    strict: bool = False) -> Assignment:
    """Schedule every flow of the problem one at a time.

    ``order`` is "arrival" (problem order) or "amount" (largest flows
    first, ties by id). Rejected flows (admission cap or no eligible
    placement) are left out of the returned placements, unless
    ``strict`` is set, in which case they abort the run.
    """
    if order == "arrival":
        sequence = list(problem.flows)
    elif order == "amount":
        sequence = sorted(problem.flows, key=lambda f: (-f.amount, f.id))
    else:
        raise ValueError(f"unknown order {order!r}")
    scheduler = OnlineScheduler(problem, admission_cap=admission_cap,
                                batch_window=batch_window, eps0=eps0)
    for flow in sequence:
        try:
            scheduler.schedule(flow)
        except InfeasibleFlow:
            if strict:
                raise
            continue
    scheduler.flush()
    placed = make_assignment(
        problem, {fid: hops for fid, hops in scheduler.placements.items()})
    return placed
