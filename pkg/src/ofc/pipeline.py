"""Action-graph execution over timestamped packet traces.

The loop is tick driven: trace records whose ts equals the current
tick enter through their FromDevice and push through the graph until
they reach a queue (MANY_TO_ONE), a sink, or a ToDevice; afterwards
each ToDevice issues pulls that drain upstream queues. Packets that
make an action fail are recorded as faults and dropped; the accounting
identity injected == emitted + discarded + dropped + faulted + held +
queued holds after every tick.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .actions import Category, Registry, default_registry
from .actions.base import ActionInstance, Event
from .actions.device import ToDevice
from .errors import InputOutputError, OfcError, RuntimeFault
from .graph import ActionGraph, GraphValidationFailed, validate_graph
from .packet import Packet, ValueType, new_packet

_ORD_META = "inj_ord"


@dataclass
class TraceRecord:
    ts: int
    port: int
    hex: str

    def to_json(self) -> dict:
        return {"ts": self.ts, "port": self.port, "hex": self.hex}


def load_trace(path: str) -> list[TraceRecord]:
    records = []
    try:
        with open(path) as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    records.append(TraceRecord(int(obj["ts"]),
                                               int(obj["port"]),
                                               str(obj["hex"])))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    raise InputOutputError(
                        f"{path}:{line_no}: bad trace record") from None
    except OSError as exc:
        raise InputOutputError(f"cannot read trace {path}: {exc}") from None
    return records


def dump_trace(records: list[TraceRecord], path: str):
    try:
        with open(path, "w") as fh:
            for r in records:
                fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
    except OSError as exc:
        raise InputOutputError(f"cannot write {path}: {exc}") from None


@dataclass
class FaultRecord:
    instance: str
    ordinal: int
    error: str

    def to_json(self) -> dict:
        return {"instance": self.instance, "ordinal": self.ordinal,
                "error": self.error}


@dataclass
class PipelineResult:
    outputs: list[TraceRecord]
    events: list[Event]
    counters: dict
    faults: list[FaultRecord] = field(default_factory=list)


class Pipeline:
    """Instantiated action graph plus its execution state."""

    def __init__(self, graph: ActionGraph, registry: Registry | None = None,
                 require_valid: bool = True, strict_faults: bool = False):
        self.graph = graph
        self.registry = registry or default_registry()
        if require_valid:
            report = validate_graph(graph, self.registry)
            if not report.ok:
                raise GraphValidationFailed(report)
        self.strict_faults = strict_faults
        self.instances: dict[str, ActionInstance] = {}
        for spec in graph.nodes.values():
            self.instances[spec.name] = self.registry.instantiate(
                spec.class_name if not spec.is_sink else "Discard",
                spec.name, spec.args)
        self._topo = graph.topo_order() or list(graph.nodes)
        self._topo_index = {n: i for i, n in enumerate(self._topo)}
        # (instance, out_port) -> (instance, in_port)
        self._wires = {(e.src, e.src_port): (e.dst, e.dst_port)
                       for e in graph.edges}
        self._in_wire = {(e.dst, e.dst_port): (e.src, e.src_port)
                         for e in graph.edges}
        self._sources = [self.instances[n] for n in self._topo
                         if self.instances[n].CATEGORY is Category.STARTING]
        self._sinks = [self.instances[n] for n in self._topo
                       if self.instances[n].CATEGORY is Category.ENDING]
        self.tick = 0
        self.injected = 0
        self.emitted = 0
        self.unmatched = 0
        self.outputs: list[TraceRecord] = []
        self.events: list[Event] = []
        self.faults: list[FaultRecord] = []
        self._event_seq = 0

    # -------------------------------------------------------- attributes

    def set_attributes(self, mapping: dict, phase: str = "config"):
        for inst_name, attrs in mapping.items():
            inst = self.instances.get(inst_name)
            if inst is None:
                raise OfcError(f"no instance {inst_name!r}")
            for attr, value in attrs.items():
                inst.set_attribute(attr, value, phase=phase)
            self._drain_events(inst)
            for port, packet in inst.take_pending():
                self._push(inst, port, packet)

    # ------------------------------------------------------------ events

    def _drain_events(self, inst: ActionInstance):
        for ev in inst.take_events():
            ev.tick = self.tick
            ev.seq = self._event_seq
            self._event_seq += 1
            self.events.append(ev)

    # --------------------------------------------------------- data path

    def _safe_handle(self, inst: ActionInstance, packet: Packet,
                     in_port: int) -> list[tuple[int, Packet]]:
        try:
            outs = inst.handle(packet, in_port)
        except Exception as exc:  # noqa: BLE001 - faults isolate the packet
            ordinal = -1
            meta = packet.metadata.get(_ORD_META)
            if meta is not None:
                ordinal = meta.value
            fault = RuntimeFault(inst.name, ordinal, exc)
            if self.strict_faults or not isinstance(exc, OfcError):
                raise fault from exc
            self.faults.append(FaultRecord(inst.name, ordinal, str(exc)))
            return []
        finally:
            self._drain_events(inst)
        return outs

    def _push(self, inst: ActionInstance, out_port: int, packet: Packet):
        wire = self._wires.get((inst.name, out_port))
        if wire is None:
            # validated graphs have no dangling ports; treat as drop
            inst.dropped += 1
            return
        dst_name, dst_port = wire
        dst = self.instances[dst_name]
        if dst.CATEGORY is Category.ENDING:
            dst.handle(packet, dst_port)
            if isinstance(dst, ToDevice):
                self.emitted += 1
                self.outputs.append(TraceRecord(
                    self.tick, dst.port, packet.payload.hex()))
            return
        if dst.CATEGORY is Category.MANY_TO_ONE:
            dst.enqueue(dst_port, packet)
            return
        for port, pkt in self._safe_handle(dst, packet, dst_port):
            self._push(dst, port, pkt)

    def _pull_from(self, name: str, port: int) -> Packet | None:
        wire = self._in_wire.get((name, port))
        if wire is None:
            return None
        src_name, _src_port = wire
        src = self.instances[src_name]
        if src.CATEGORY is Category.MANY_TO_ONE:
            packet = src.pull()
            return packet
        if src.CATEGORY is Category.ONE_TO_ONE:
            upstream = self._pull_from(src_name, 0)
            if upstream is None:
                return None
            outs = self._safe_handle(src, upstream, 0)
            if not outs:
                return None
            first, rest = outs[0], outs[1:]
            for extra_port, extra in rest:
                self._push(src, extra_port, extra)
            return first[1]
        return None  # STARTING and ONE_TO_MANY do not serve pulls

    # -------------------------------------------------------------- run

    def _flush_pending(self):
        for name in self._topo:
            inst = self.instances[name]
            for port, packet in inst.take_pending():
                self._push(inst, port, packet)

    def step(self, records: list[TraceRecord], pulls_per_tick: int = 1):
        """One tick: release pending, inject records, serve pulls."""
        self._flush_pending()
        for record in records:
            matched = False
            for source in self._sources:
                if source.port == record.port:
                    packet = new_packet(record.hex, ingress_port=record.port,
                                        timestamp=record.ts)
                    packet.mark_layers()
                    packet.write_meta(_ORD_META, ValueType.UINT32,
                                      self.injected)
                    self.injected += 1
                    source.packets_out += 1
                    self._push(source, 0, packet)
                    matched = True
                    break
            if not matched:
                self.unmatched += 1
        for sink in self._sinks:
            if not isinstance(sink, ToDevice):
                continue
            for _ in range(pulls_per_tick):
                packet = self._pull_from(sink.name, 0)
                if packet is None:
                    break
                sink.handle(packet, 0)
                self.emitted += 1
                self.outputs.append(TraceRecord(
                    self.tick, sink.port, packet.payload.hex()))
        self.tick += 1

    def run(self, trace: list[TraceRecord], ticks: int | None = None,
            pulls_per_tick: int = 1) -> PipelineResult:
        by_tick: dict[int, list[TraceRecord]] = {}
        for record in trace:
            by_tick.setdefault(record.ts, []).append(record)
        if ticks is None:
            last = max(by_tick) if by_tick else 0
            ticks = last + 1 + len(trace)
        for _ in range(ticks):
            self.step(by_tick.get(self.tick, []), pulls_per_tick)
        return PipelineResult(self.outputs, self.events, self.counters(),
                              self.faults)

    # ------------------------------------------------------- accounting

    def counters(self) -> dict:
        discarded = dropped = held = queued = 0
        per_instance = {}
        for name in self._topo:
            inst = self.instances[name]
            c = inst.counters()
            per_instance[name] = c
            dropped += c["dropped"]
            held += c["held"]
            queued += c.get("queued", 0)
            if hasattr(inst, "discarded"):
                discarded += inst.discarded
        return {
            "injected": self.injected,
            "emitted": self.emitted,
            "discarded": discarded,
            "dropped": dropped,
            "faulted": len(self.faults),
            "held": held,
            "queued": queued,
            "unmatched": self.unmatched,
            "instances": per_instance,
        }

    def accounting_balanced(self) -> bool:
        c = self.counters()
        return c["injected"] == (c["emitted"] + c["discarded"] + c["dropped"]
                                 + c["faulted"] + c["held"] + c["queued"])


def run_script(text: str, trace: list[TraceRecord],
               attrs: dict | None = None, ticks: int | None = None,
               pulls_per_tick: int = 1,
               registry: Registry | None = None) -> PipelineResult:
    """Parse, validate, configure, and run a script in one call."""
    from .graph import parse_and_validate
    graph, report = parse_and_validate(text, registry)
    if not report.ok:
        raise GraphValidationFailed(report)
    pipe = Pipeline(graph, registry)
    if attrs:
        pipe.set_attributes(attrs)
    return pipe.run(trace, ticks=ticks, pulls_per_tick=pulls_per_tick)
