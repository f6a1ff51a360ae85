"""Centralized control loop over simulated boxes.

The controller owns the box/SDM catalog, schedules flows as they
arrive, enforces placements by starting data-plane processes on each
box's shim and installing per-flow steering, and reacts to box
failures, chain mutations, and departures.  Alongside the control
events it co-simulates the packet plane: every tick each live flow may
inject one packet, every box shim advances one tick, and packets that
leave one box are handed to the flow's next box over ideal links.

Steering model: a flow's placement is cut into *segments* — maximal
runs of consecutive chain positions on the same box.  Each segment gets
its own shim flow key (flow id / placement generation / segment index),
so replacing a flow's placement installs fresh keys while packets
already in flight keep routing by the keys they were stamped with;
stale keys are torn down once their packets drain.  This keeps
reconfiguration lossless end to end, not just within one box.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .chain import BoxShim
from .errors import InfeasibleFlow, StillReferenced, ValidationError
from .graph import parse_and_validate
from .pipeline import Pipeline
from .scheduling import (Box, Flow, Impl, OnlineScheduler, Sdm,
                         SchedulingProblem, make_assignment)

DEFAULT_MAX_TICKS = 100_000


# --------------------------------------------------------------- scenario


@dataclass(frozen=True)
class FlowArrival:
    time: int
    flow: Flow
    packets: tuple[bytes, ...] = ()


@dataclass(frozen=True)
class FlowDeparture:
    time: int
    flow_id: str


@dataclass(frozen=True)
class BoxFailure:
    time: int
    box_id: str


@dataclass(frozen=True)
class ChainMutation:
    time: int
    flow_id: str
    chain: tuple[str, ...]


@dataclass
class Scenario:
    """Boxes, SDM catalog (optionally with per-impl pipeline scripts),
    and a time-ordered event list."""

    boxes: list[Box]
    sdms: list[Sdm]
    events: list
    scripts: dict[str, str] = field(default_factory=dict)  # impl id -> .ofs

    def __post_init__(self):
        box_ids = {b.id for b in self.boxes}
        sdm_ids = {s.id for s in self.sdms}
        known_flows: set[str] = set()
        last = None
        for ev in self.events:
            if last is not None and ev.time < last:
                raise ValidationError(
                    f"event times must be nondecreasing, got {ev.time} "
                    f"after {last}")
            last = ev.time
            if isinstance(ev, FlowArrival):
                for sdm_id in ev.flow.chain:
                    if sdm_id not in sdm_ids:
                        raise ValidationError(
                            f"flow {ev.flow.id} references unknown "
                            f"SDM {sdm_id!r}")
                known_flows.add(ev.flow.id)
            elif isinstance(ev, FlowDeparture):
                if ev.flow_id not in known_flows:
                    raise ValidationError(
                        f"departure of unknown flow {ev.flow_id!r}")
            elif isinstance(ev, BoxFailure):
                if ev.box_id not in box_ids:
                    raise ValidationError(
                        f"failure of unknown box {ev.box_id!r}")
            elif isinstance(ev, ChainMutation):
                if ev.flow_id not in known_flows:
                    raise ValidationError(
                        f"mutation of unknown flow {ev.flow_id!r}")
                for sdm_id in ev.chain:
                    if sdm_id not in sdm_ids:
                        raise ValidationError(
                            f"mutation of {ev.flow_id} references unknown "
                            f"SDM {sdm_id!r}")

    @classmethod
    def from_json(cls, obj: dict) -> "Scenario":
        boxes = [Box(id=b["id"],
                     capacity=dict(b["capacity"]),
                     utilization=dict(b.get("utilization", {})))
                 for b in obj["boxes"]]
        sdms = []
        scripts: dict[str, str] = {}
        for s in obj["sdms"]:
            impls = []
            for im in s["impls"]:
                impls.append(Impl(id=im["id"], demand=dict(im["demand"])))
                if im.get("script"):
                    scripts[im["id"]] = im["script"]
            sdms.append(Sdm(id=s["id"], impls=impls))
        events = []
        for ev in obj.get("events", []):
            kind = ev["type"]
            time = int(ev["time"])
            if kind == "FlowArrival":
                f = ev["flow"]
                flow = Flow(id=f["id"], amount=float(f.get("amount", 1.0)),
                            chain=tuple(f["chain"]))
                if "trace" in ev:
                    packets = tuple(bytes.fromhex(h) for h in ev["trace"])
                else:
                    packets = tuple(
                        f"{flow.id}:{i}".encode()
                        for i in range(int(ev.get("packets", 0))))
                events.append(FlowArrival(time, flow, packets))
            elif kind == "FlowDeparture":
                events.append(FlowDeparture(time, ev["flow"]))
            elif kind == "BoxFailure":
                events.append(BoxFailure(time, ev["box"]))
            elif kind == "ChainMutation":
                events.append(ChainMutation(time, ev["flow"],
                                            tuple(ev["chain"])))
            else:
                raise ValidationError(f"unknown event type {kind!r}")
        return cls(boxes, sdms, events, scripts)

    @classmethod
    def load(cls, path: str) -> "Scenario":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------- runtime


@dataclass
class _Segment:
    box_id: str
    key: str
    dp_ids: list[int]
    sent: int = 0      # packets accepted into this box for this key
    done: int = 0      # packets that came back out

    @property
    def in_box(self) -> int:
        return self.sent - self.done


@dataclass
class _FlowRuntime:
    flow: Flow
    packets: deque
    served: bool = True
    injected: int = 0
    delivered: int = 0
    dropped: int = 0
    generation: int = 0
    segments: list[_Segment] = field(default_factory=list)
    stale: list[_Segment] = field(default_factory=list)


class Controller:
    """Event-driven scheduler + enforcement + packet-plane co-simulation."""

    def __init__(self, scenario: Scenario, policy: dict | None = None):
        policy = dict(policy or {})
        self.scenario = scenario
        self.eps0 = float(policy.pop("eps0", 0.2))
        self.admission_cap = policy.pop("admission_cap", None)
        self.max_ticks = int(policy.pop("max_ticks", DEFAULT_MAX_TICKS))
        if policy:
            raise ValidationError(f"unknown policy keys: {sorted(policy)}")
        self.problem = SchedulingProblem(scenario.boxes, scenario.sdms, [])
        self.scheduler = OnlineScheduler(
            self.problem, admission_cap=self.admission_cap, eps0=self.eps0)
        self.shims: dict[str, BoxShim] = {b.id: BoxShim()
                                          for b in scenario.boxes}
        self.dp_table: dict[str, dict[str, int]] = {b.id: {}
                                                    for b in scenario.boxes}
        self.failed: set[str] = set()
        self.flows: dict[str, _FlowRuntime] = {}
        self.arrival_order: list[str] = []
        self.steering: dict[str, list[tuple[str, int]]] = {}
        # (box id, shim key) -> (flow id, segment, next segment or None)
        self._routes: dict[tuple[str, str], tuple] = {}
        self.tick_count = 0
        self.reconfigurations = 0
        self.infeasible: list[str] = []
        self.event_log: list[dict] = []
        self.utilization_series: list[dict] = []
        self._impl_demand = {im.id: im
                             for s in scenario.sdms for im in s.impls}

    # ---------------------------------------------------------- monitor

    def monitor(self) -> dict:
        """Per-box per-resource utilization from committed placements."""
        load = self.scheduler.committed
        snapshot = {}
        for n, box in enumerate(self.problem.boxes):
            snapshot[box.id] = {
                res: float(load[n, r])
                for r, res in enumerate(self.problem.resources)}
        return snapshot

    def peak_utilization(self) -> float:
        return self.scheduler.peak()

    def assignment(self):
        """Current committed placements as an assignment snapshot."""
        live = [st.flow for fid, st in self.flows.items()
                if fid in self.scheduler.placements]
        problem = SchedulingProblem(self.scenario.boxes, self.scenario.sdms,
                                    live)
        placements = {fid: self.scheduler.placements[fid]
                      for fid in self.scheduler.placements}
        return make_assignment(problem, placements)

    # ------------------------------------------------------ enforcement

    def _processor_for(self, impl_id: str):
        script = self.scenario.scripts.get(impl_id)
        if script is None:
            return None  # identity data path
        graph, report = parse_and_validate(script)
        if not report.ok:
            raise ValidationError(
                f"impl {impl_id}: bad pipeline script: "
                f"{'; '.join(d.message for d in report.diagnostics)}")
        return Pipeline(graph)

    def _ensure_dp(self, box_id: str, impl_id: str,
                   actions: list[dict]) -> int:
        table = self.dp_table[box_id]
        dp_id = table.get(impl_id)
        if dp_id is None:
            dp_id, ring_id = self.shims[box_id].register_dp(
                self._processor_for(impl_id))
            table[impl_id] = dp_id
            actions.append({"action": "register_dp", "box": box_id,
                            "impl": impl_id, "dp": dp_id, "ring": ring_id})
        return dp_id

    def _segments_of(self, hops: list[tuple[int, str, str]],
                     flow_id: str, generation: int,
                     actions: list[dict]) -> list[_Segment]:
        segments: list[_Segment] = []
        for position, impl_id, box_id in sorted(hops):
            dp_id = self._ensure_dp(box_id, impl_id, actions)
            if segments and segments[-1].box_id == box_id:
                segments[-1].dp_ids.append(dp_id)
            else:
                key = f"{flow_id}/{generation}/{len(segments)}"
                segments.append(_Segment(box_id, key, [dp_id]))
        return segments

    def _apply_placement(self, state: _FlowRuntime,
                         hops: list[tuple[int, str, str]],
                         actions: list[dict]):
        """Install fresh segment keys; demote the old ones to stale."""
        state.generation += 1
        segments = self._segments_of(hops, state.flow.id, state.generation,
                                     actions)
        for idx, seg in enumerate(segments):
            shim = self.shims[seg.box_id]
            version = shim.set_chain(seg.key, seg.dp_ids)
            actions.append({"action": "set_chain", "box": seg.box_id,
                            "flow": seg.key, "dps": list(seg.dp_ids),
                            "version": version})
            nxt = segments[idx + 1] if idx + 1 < len(segments) else None
            self._routes[(seg.box_id, seg.key)] = (state.flow.id, seg, nxt)
        state.stale.extend(state.segments)
        state.segments = segments
        dp_ids = {box_id: self.dp_table[box_id] for box_id in
                  {seg.box_id for seg in segments}}
        steering = []
        for position, impl_id, box_id in sorted(hops):
            steering.append((box_id, dp_ids[box_id][impl_id]))
        self.steering[state.flow.id] = steering
        actions.append({"action": "steer", "flow": state.flow.id,
                        "hops": [[b, d] for b, d in steering]})

    def enforce(self, placements: dict[str, list] | None = None
                ) -> list[dict]:
        """Diff-based application of placements to shims and steering.

        Only flows whose placement differs from what is installed cause
        actions; enforcing the same placements twice is a no-op.
        """
        if placements is None:
            placements = self.scheduler.placements
        actions: list[dict] = []
        for fid, hops in placements.items():
            state = self.flows.get(fid)
            if state is None:
                continue
            current = self._installed_hops(state)
            if current == sorted(hops):
                continue
            self._apply_placement(state, hops, actions)
        return actions

    def _installed_hops(self, state: _FlowRuntime):
        hops = []
        position = 0
        impl_by_dp: dict[tuple[str, int], str] = {}
        for box_id, table in self.dp_table.items():
            for impl_id, dp_id in table.items():
                impl_by_dp[(box_id, dp_id)] = impl_id
        for seg in state.segments:
            for dp_id in seg.dp_ids:
                impl_id = impl_by_dp.get((seg.box_id, dp_id))
                hops.append((position, impl_id, seg.box_id))
                position += 1
        return hops

    # ----------------------------------------------------------- events

    def _log(self, kind: str, **detail):
        entry = {"tick": self.tick_count, "event": kind}
        entry.update(detail)
        self.event_log.append(entry)

    def _sample(self):
        snapshot = self.monitor()
        self.utilization_series.append({
            "tick": self.tick_count,
            "utilization": snapshot,
            "max": self.peak_utilization(),
        })

    def handle(self, event) -> list[dict]:
        if isinstance(event, FlowArrival):
            return self._on_arrival(event)
        if isinstance(event, FlowDeparture):
            return self._on_departure(event)
        if isinstance(event, BoxFailure):
            return self._on_failure(event)
        if isinstance(event, ChainMutation):
            return self._on_mutation(event)
        raise ValidationError(f"unknown event {event!r}")

    def _on_arrival(self, event: FlowArrival) -> list[dict]:
        state = _FlowRuntime(flow=event.flow, packets=deque(event.packets))
        self.flows[event.flow.id] = state
        self.arrival_order.append(event.flow.id)
        try:
            hops = self.scheduler.schedule(
                event.flow, exclude_boxes=frozenset(self.failed))
        except InfeasibleFlow as exc:
            state.served = False
            self.infeasible.append(event.flow.id)
            self._log("FlowArrival", flow=event.flow.id,
                      infeasible=str(exc))
            return []
        self._log("FlowArrival", flow=event.flow.id, hops=len(hops))
        return self.enforce({event.flow.id: hops})

    def _on_departure(self, event: FlowDeparture) -> list[dict]:
        state = self.flows.get(event.flow_id)
        self.scheduler.release(event.flow_id)
        self.steering.pop(event.flow_id, None)
        if state is not None:
            state.packets.clear()
            self._retire_flow(state)
        self._log("FlowDeparture", flow=event.flow_id)
        return []

    def _retire_flow(self, state: _FlowRuntime):
        """Stop serving a flow; its installed keys drain then tear down."""
        state.served = False
        state.stale.extend(state.segments)
        state.segments = []

    def _on_failure(self, event: BoxFailure) -> list[dict]:
        box_id = event.box_id
        self.failed.add(box_id)
        self.shims.pop(box_id, None)
        self.dp_table.pop(box_id, None)
        lost = 0
        for (b, key), (fid, seg, _nxt) in list(self._routes.items()):
            if b != box_id:
                continue
            state = self.flows[fid]
            state.dropped += seg.in_box
            lost += seg.in_box
            seg.done = seg.sent
            del self._routes[(b, key)]
        affected = [fid for fid in self.arrival_order
                    if fid in self.scheduler.placements
                    and any(hop[2] == box_id
                            for hop in self.scheduler.placements[fid])]
        actions: list[dict] = []
        rescheduled = []
        for fid in affected:
            state = self.flows[fid]
            self.scheduler.release(fid)
            try:
                hops = self.scheduler.schedule(
                    state.flow, exclude_boxes=frozenset(self.failed))
            except InfeasibleFlow as exc:
                self._retire_flow(state)
                self.steering.pop(fid, None)
                self.infeasible.append(fid)
                self._log("Reschedule", flow=fid, infeasible=str(exc))
                continue
            self.reconfigurations += 1
            rescheduled.append(fid)
            actions.extend(self.enforce({fid: hops}))
        self._log("BoxFailure", box=box_id, in_flight_dropped=lost,
                  affected=affected, rescheduled=rescheduled)
        return actions

    def _on_mutation(self, event: ChainMutation) -> list[dict]:
        state = self.flows[event.flow_id]
        new_flow = Flow(id=event.flow_id, amount=state.flow.amount,
                        chain=tuple(event.chain))
        self.scheduler.release(event.flow_id)
        state.flow = new_flow
        try:
            hops = self.scheduler.schedule(
                new_flow, exclude_boxes=frozenset(self.failed))
        except InfeasibleFlow as exc:
            self._retire_flow(state)
            self.steering.pop(event.flow_id, None)
            self.infeasible.append(event.flow_id)
            self._log("ChainMutation", flow=event.flow_id,
                      infeasible=str(exc))
            return []
        state.served = True
        self.reconfigurations += 1
        self._log("ChainMutation", flow=event.flow_id,
                  chain=list(event.chain))
        return self.enforce({event.flow_id: hops})

    # ------------------------------------------------------- data plane

    def tick(self):
        """One data-plane tick: inject, advance shims, forward, retire."""
        for fid in self.arrival_order:
            state = self.flows[fid]
            if not state.served or not state.packets or not state.segments:
                continue
            seg = state.segments[0]
            if seg.box_id in self.failed:
                continue
            data = state.packets.popleft()
            state.injected += 1
            if self.shims[seg.box_id].ingress(seg.key, data):
                seg.sent += 1
            else:
                state.dropped += 1
        emitted: list[tuple[str, object]] = []
        for box_id in sorted(self.shims):
            shim = self.shims[box_id]
            for packet in shim.step():
                emitted.append((box_id, packet))
            for key, count in shim.take_losses().items():
                route = self._routes.get((box_id, key))
                if route is None:
                    continue
                fid, seg, _nxt = route
                seg.done += count
                self.flows[fid].dropped += count
        # forward after every shim has stepped, so a cross-box hop takes
        # exactly one tick regardless of box iteration order
        for box_id, packet in emitted:
            route = self._routes.get((box_id, packet.flow))
            if route is None:
                continue  # key already torn down; packet evaporates
            fid, seg, nxt = route
            seg.done += 1
            state = self.flows[fid]
            if nxt is None:
                state.delivered += 1
                continue
            if nxt.box_id in self.failed:
                state.dropped += 1
                continue
            if self.shims[nxt.box_id].ingress(nxt.key, packet.data):
                nxt.sent += 1
            else:
                state.dropped += 1
        self._cleanup()
        self.tick_count += 1

    def _cleanup(self):
        """Tear down drained stale keys and retire unused DP processes."""
        for state in self.flows.values():
            remaining = []
            for seg in state.stale:
                if seg.in_box == 0:
                    if seg.box_id in self.shims:
                        self.shims[seg.box_id].drop_chain(seg.key)
                    self._routes.pop((seg.box_id, seg.key), None)
                else:
                    remaining.append(seg)
            state.stale = remaining
        needed: dict[str, set[int]] = {b: set() for b in self.shims}
        for (box_id, _key), (_fid, seg, _nxt) in self._routes.items():
            if box_id in needed:
                needed[box_id].update(seg.dp_ids)
        for box_id, shim in self.shims.items():
            table = self.dp_table[box_id]
            for impl_id, dp_id in list(table.items()):
                if dp_id in needed[box_id]:
                    continue
                try:
                    if shim.remove_dp(dp_id):
                        del table[impl_id]
                except StillReferenced:
                    continue

    # -------------------------------------------------------- main loop

    def in_flight(self) -> int:
        total = 0
        for state in self.flows.values():
            total += state.injected - state.delivered - state.dropped
        return total

    def pending_packets(self) -> int:
        return sum(len(s.packets) for s in self.flows.values()
                   if s.served and s.segments)

    def run(self, ticks_per_event: int = 1) -> dict:
        events = sorted(self.scenario.events, key=lambda e: e.time)
        self._sample()
        for event in events:
            target = event.time * ticks_per_event
            while self.tick_count < target \
                    and self.tick_count < self.max_ticks:
                self.tick()
            self.handle(event)
            self._sample()
        while (self.in_flight() > 0 or self.pending_packets() > 0) \
                and self.tick_count < self.max_ticks:
            self.tick()
        for _ in range(4):  # let retirement polling settle
            if self.tick_count >= self.max_ticks:
                break
            self.tick()
        self._sample()
        return self.metrics()

    def metrics(self) -> dict:
        flows = {}
        for fid in self.arrival_order:
            state = self.flows[fid]
            flows[fid] = {
                "injected": state.injected,
                "delivered": state.delivered,
                "dropped": state.dropped,
                "in_flight": state.injected - state.delivered
                             - state.dropped,
                "unsent": len(state.packets),
                "served": state.served,
            }
        return {
            "ticks": self.tick_count,
            "max_utilization": max((s["max"]
                                    for s in self.utilization_series),
                                   default=0.0),
            "utilization_series": self.utilization_series,
            "flows": flows,
            "reconfigurations": self.reconfigurations,
            "infeasible": list(self.infeasible),
            "events": self.event_log,
        }


def run_scenario(scenario: Scenario, policy: dict | None = None,
                 ticks_per_event: int = 1) -> dict:
    """Process every event in order and co-simulate the packet plane."""
    return Controller(scenario, policy).run(ticks_per_event)
