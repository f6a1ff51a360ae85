"""Service-chain scheduling problem and assignment types.

A problem instance holds boxes with per-resource capacities and
existing utilization, SDM kinds with alternative implementations
(per-resource demand per unit of traffic), and flows with an amount
and an ordered SDM chain. An assignment fixes one (implementation,
box) per chain position of every flow; its objective is the maximum
over boxes and resources of demand-weighted load plus prior
utilization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import InputOutputError, ValidationError


@dataclass(frozen=True)
class Impl:
    id: str
    demand: dict[str, float]


@dataclass(frozen=True)
class Sdm:
    id: str
    impls: tuple[Impl, ...]


@dataclass(frozen=True)
class Box:
    id: str
    capacity: dict[str, float]
    utilization: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Flow:
    id: str
    amount: float
    chain: tuple[str, ...]


class SchedulingProblem:
    """Validated instance with index lookups and dense demand arrays."""

    def __init__(self, boxes: list[Box], sdms: list[Sdm], flows: list[Flow]):
        self.boxes = list(boxes)
        self.sdms = list(sdms)
        self.flows = list(flows)
        self._validate()
        self.resources = sorted(
            {r for b in self.boxes for r in b.capacity}
            | {r for s in self.sdms for impl in s.impls
               for r, d in impl.demand.items() if d > 0})
        self.box_index = {b.id: n for n, b in enumerate(self.boxes)}
        self.sdm_index = {s.id: k for k, s in enumerate(self.sdms)}
        self.n_boxes = len(self.boxes)
        self.n_resources = len(self.resources)
        # Omega[n,r], Gamma[n,r], D[k][i,r].  A box that does not
        # provision a resource gets infinite capacity for it, and
        # eligibility below forbids placing positive demand there.
        self.omega = np.array(
            [[b.capacity.get(r, np.inf) for r in self.resources]
             for b in self.boxes], dtype=float)
        self.gamma = np.array(
            [[b.utilization.get(r, 0.0) for r in self.resources]
             for b in self.boxes], dtype=float)
        self.demand = [
            np.array([[impl.demand.get(r, 0.0) for r in self.resources]
                      for impl in s.impls], dtype=float)
            for s in self.sdms]
        provided = np.isfinite(self.omega)                    # (N, R)
        self._eligible = [
            ~((self.demand[k][:, None, :] > 0.0) & ~provided[None, :, :])
            .any(axis=2)                                      # (I_k, N)
            for k in range(len(self.sdms))]

    def _validate(self):
        seen = set()
        for b in self.boxes:
            if b.id in seen:
                raise ValidationError(f"duplicate box id {b.id!r}")
            seen.add(b.id)
            for r, cap in b.capacity.items():
                if cap <= 0:
                    raise ValidationError(
                        f"box {b.id}: capacity for {r!r} must be positive")
            for r, util in b.utilization.items():
                if r not in b.capacity:
                    raise ValidationError(
                        f"box {b.id}: utilization for unprovisioned "
                        f"resource {r!r}")
                if not 0.0 <= util <= 1.0:
                    raise ValidationError(
                        f"box {b.id}: utilization for {r!r} outside [0,1]")
        if not self.boxes:
            raise ValidationError("at least one box is required")
        sdm_ids = set()
        for s in self.sdms:
            if s.id in sdm_ids:
                raise ValidationError(f"duplicate sdm id {s.id!r}")
            sdm_ids.add(s.id)
            if not s.impls:
                raise ValidationError(f"sdm {s.id}: needs an implementation")
            for impl in s.impls:
                for r, d in impl.demand.items():
                    if d < 0:
                        raise ValidationError(
                            f"impl {s.id}/{impl.id}: negative demand")
        flow_ids = set()
        for f in self.flows:
            if f.id in flow_ids:
                raise ValidationError(f"duplicate flow id {f.id!r}")
            flow_ids.add(f.id)
            if f.amount < 0:
                raise ValidationError(f"flow {f.id}: negative amount")
            for sdm_id in f.chain:
                if sdm_id not in sdm_ids:
                    raise ValidationError(
                        f"flow {f.id}: unknown sdm {sdm_id!r}")

    # ---------------------------------------------------------- options

    def eligible(self, k: int, i: int, n: int) -> bool:
        """May implementation ``i`` of kind ``k`` run on box ``n``?

        It may not when it has positive demand for a resource the box
        does not provision.
        """
        return bool(self._eligible[k][i, n])

    def options(self, sdm_id: str,
                exclude_boxes: set[str] | None = None) -> list[tuple[int, int]]:
        """(impl index, box index) choices for one chain position."""
        k = self.sdm_index[sdm_id]
        out = []
        for i in range(len(self.sdms[k].impls)):
            for n in range(self.n_boxes):
                if exclude_boxes and self.boxes[n].id in exclude_boxes:
                    continue
                if not self._eligible[k][i, n]:
                    continue
                out.append((i, n))
        return out

    def option_loads(self, flow: Flow, sdm_id: str,
                     exclude_boxes: set[str] | None = None) -> np.ndarray:
        """Per-option utilization deltas, shape (len(options), N*R)."""
        k = self.sdm_index[sdm_id]
        opts = self.options(sdm_id, exclude_boxes)
        out = np.zeros((len(opts), self.n_boxes * self.n_resources))
        for row, (i, n) in enumerate(opts):
            demand = self.demand[k][i] * flow.amount / self.omega[n]
            out[row, n * self.n_resources:(n + 1) * self.n_resources] = demand
        return out

    # ------------------------------------------------------------- json

    @classmethod
    def from_json(cls, obj: dict) -> "SchedulingProblem":
        try:
            boxes = [Box(str(b["id"]),
                         {str(r): float(v) for r, v in b["capacity"].items()},
                         {str(r): float(v)
                          for r, v in b.get("utilization", {}).items()})
                     for b in obj["boxes"]]
            sdms = [Sdm(str(s["id"]),
                        tuple(Impl(str(i["id"]),
                                   {str(r): float(v)
                                    for r, v in i["demand"].items()})
                              for i in s["impls"]))
                    for s in obj["sdms"]]
            flows = [Flow(str(f["id"]), float(f["amount"]),
                          tuple(str(s) for s in f["chain"]))
                     for f in obj["flows"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed problem: {exc}") from None
        return cls(boxes, sdms, flows)

    @classmethod
    def load(cls, path: str) -> "SchedulingProblem":
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise InputOutputError(f"cannot read {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_json(obj)

    def to_json(self) -> dict:
        return {
            "boxes": [{"id": b.id, "capacity": b.capacity,
                       "utilization": b.utilization} for b in self.boxes],
            "sdms": [{"id": s.id,
                      "impls": [{"id": i.id, "demand": i.demand}
                                for i in s.impls]} for s in self.sdms],
            "flows": [{"id": f.id, "amount": f.amount,
                       "chain": list(f.chain)} for f in self.flows],
        }


@dataclass
class Assignment:
    """Unsplittable placement: one (impl, box) per chain position."""

    # flow id -> [(position, impl id, box id), ...]
    placements: dict[str, list[tuple[int, str, str]]]
    objective: float
    # (sdm id, impl id, box id) -> total traffic routed through it
    traffic: dict[tuple[str, str, str], float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "objective": self.objective,
            "flows": {fid: [{"position": p, "impl": i, "box": b}
                            for p, i, b in hops]
                      for fid, hops in sorted(self.placements.items())},
            "traffic": [{"sdm": s, "impl": i, "box": b, "amount": a}
                        for (s, i, b), a in sorted(self.traffic.items())],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Assignment":
        placements = {
            fid: [(int(h["position"]), str(h["impl"]), str(h["box"]))
                  for h in hops]
            for fid, hops in obj["flows"].items()}
        traffic = {(str(t["sdm"]), str(t["impl"]), str(t["box"])):
                   float(t["amount"]) for t in obj.get("traffic", [])}
        return cls(placements, float(obj["objective"]), traffic)


def compute_traffic(problem: SchedulingProblem,
                    placements: dict[str, list[tuple[int, str, str]]]
                    ) -> dict[tuple[str, str, str], float]:
    """Aggregate per-(sdm, impl, box) traffic of a placement."""
    flow_by_id = {f.id: f for f in problem.flows}
    traffic: dict[tuple[str, str, str], float] = {}
    for fid, hops in placements.items():
        flow = flow_by_id[fid]
        for position, impl_id, box_id in hops:
            key = (flow.chain[position], impl_id, box_id)
            traffic[key] = traffic.get(key, 0.0) + flow.amount
    return traffic


def make_assignment(problem: SchedulingProblem,
                    placements: dict[str, list[tuple[int, str, str]]]
                    ) -> Assignment:
    """Assignment with exact objective and traffic recomputed."""
    total = loads(problem, placements)
    return Assignment(placements, float(total.max()),
                      compute_traffic(problem, placements))


def loads(problem: SchedulingProblem,
          placements: dict[str, list[tuple[int, str, str]]]) -> np.ndarray:
    """Utilization per (box, resource) including prior utilization."""
    total = problem.gamma.copy()
    flow_by_id = {f.id: f for f in problem.flows}
    for fid, hops in placements.items():
        flow = flow_by_id[fid]
        for position, impl_id, box_id in hops:
            k = problem.sdm_index[flow.chain[position]]
            sdm = problem.sdms[k]
            i = next(idx for idx, im in enumerate(sdm.impls)
                     if im.id == impl_id)
            n = problem.box_index[box_id]
            total[n] += flow.amount * problem.demand[k][i] / problem.omega[n]
    return total


def objective(problem: SchedulingProblem, assignment: Assignment) -> float:
    """Max over (box, resource) of load plus prior utilization."""
    return float(loads(problem, assignment.placements).max())


def check_assignment(problem: SchedulingProblem, assignment: Assignment):
    """Structural validity: every flow covered, chain order respected."""
    flow_by_id = {f.id: f for f in problem.flows}
    for fid, flow in flow_by_id.items():
        hops = assignment.placements.get(fid)
        if hops is None:
            raise ValidationError(f"flow {fid} missing from assignment")
        if [p for p, _, _ in hops] != list(range(len(flow.chain))):
            raise ValidationError(f"flow {fid}: positions out of order")
        for position, impl_id, box_id in hops:
            sdm = problem.sdms[problem.sdm_index[flow.chain[position]]]
            if all(im.id != impl_id for im in sdm.impls):
                raise ValidationError(
                    f"flow {fid}: unknown impl {impl_id!r} at {position}")
            if box_id not in problem.box_index:
                raise ValidationError(
                    f"flow {fid}: unknown box {box_id!r} at {position}")
