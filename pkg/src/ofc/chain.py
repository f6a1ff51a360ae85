"""In-box service chaining: one IO process, per-SDM data-plane processes,
bounded ring pairs, and per-packet chain metadata.

Each data-plane (DP) process owns a pair of bounded FIFO rings: the IO
process pushes packet handles on ``to_dp`` and the DP returns results on
``from_dp``.  A flow's service chain is a :class:`ChainTemplate` — an
ordered list of ring-pair ids plus a version number.  At ingress the
current template is copied into the packet (its chain stamp: the ring-id
array and an index pointer), so replacing a flow's template affects only
packets stamped afterwards; packets already in flight finish on the
rings recorded in their own stamp.  That makes insertion and removal of
a DP mid-stream bufferless: no packet is held back or requeued during
the switch.

Determinism model: one DP hop per tick.  Every :meth:`BoxShim.step`
first lets each DP drain up to :data:`DRAIN_BUDGET` packets from its
``to_dp`` ring and push results to ``from_dp``; the IO process then
collects everything returned, advances each packet's index pointer, and
forwards it to the next ring (or to egress when the stamp is exhausted).
Forwarded packets enter the next ``to_dp`` after that DP's drain phase,
so a packet advances through exactly one DP per tick.

Ordering: rings are FIFO and the IO process forwards the packets
returned in a tick in global ingress order, but a shortened chain can
still let a late packet reach egress ahead of an in-flight predecessor
(it simply has fewer hops to make).  The IO process therefore releases
each flow's packets in ingress-sequence order: a packet that completes
early waits at the egress boundary until its predecessors have either
egressed or been counted lost.  Losses are never silent — every
back-pressure drop and every packet a DP consumes is counted and
reported to the sequencer so the flow's egress stream never stalls.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .errors import CapacityInvalid, StillReferenced, UnknownDp
from .pipeline import Pipeline, TraceRecord

DEFAULT_RING_CAPACITY = 256
DRAIN_BUDGET = 32


class Ring:
    """Bounded single-producer / single-consumer FIFO."""

    __slots__ = ("capacity", "_items")

    def __init__(self, capacity: int):
        if not isinstance(capacity, int) or isinstance(capacity, bool) \
                or capacity <= 0:
            raise CapacityInvalid(f"ring capacity must be a positive "
                                  f"integer, got {capacity!r}")
        self.capacity = capacity
        self._items: deque = deque()

    def push(self, item) -> bool:
        if len(self._items) >= self.capacity:
            return False
        self._items.append(item)
        return True

    def pop(self):
        if not self._items:
            return None
        return self._items.popleft()

    def __len__(self) -> int:
        return len(self._items)


@dataclass
class RingPair:
    """The two rings connecting the IO process with one DP process."""

    id: int
    to_dp: Ring
    from_dp: Ring
    owner: int  # dp id


@dataclass(frozen=True)
class ChainTemplate:
    """Ordered ring-pair ids a flow's packets must traverse, plus version."""

    rings: tuple[int, ...]
    version: int


@dataclass
class ChainPacket:
    """A packet handle moving through the shim.

    ``rings`` and ``index`` form the chain stamp: the ring-id array
    copied from the template at ingress and the pointer to the next
    ring-pair to traverse.  ``seq`` is the packet's per-flow ingress
    sequence number and ``order`` its global ingress ordinal.
    """

    flow: str
    data: bytes
    rings: tuple[int, ...]
    index: int
    version: int
    seq: int
    order: int

    @property
    def remaining(self) -> tuple[int, ...]:
        return self.rings[self.index:]


class PipelineProcessor:
    """Adapter running one packet at a time through an action-graph pipeline.

    The packet is injected at the pipeline's first source port and the
    pipeline is ticked until an output appears (or the tick budget runs
    out, in which case the packet counts as consumed).  If a single
    input yields several outputs only the first continues down the
    chain; the surplus is counted by the shim.
    """

    def __init__(self, pipeline: Pipeline, max_ticks: int = 64,
                 pulls_per_tick: int = 8):
        if not pipeline._sources:
            raise CapacityInvalid("pipeline has no source to inject at")
        self.pipeline = pipeline
        self.max_ticks = max_ticks
        self.pulls_per_tick = pulls_per_tick

    def __call__(self, data: bytes) -> list[bytes]:
        pipe = self.pipeline
        before = len(pipe.outputs)
        record = TraceRecord(ts=pipe.tick, port=pipe._sources[0].port,
                             hex=data.hex())
        pipe.step([record], self.pulls_per_tick)
        ticks = 1
        while len(pipe.outputs) == before and ticks < self.max_ticks:
            pipe.step([], self.pulls_per_tick)
            ticks += 1
        return [bytes.fromhex(r.hex) for r in pipe.outputs[before:]]


def _as_processor(processor):
    if processor is None:
        return lambda data: [data]
    if isinstance(processor, Pipeline):
        return PipelineProcessor(processor)
    if callable(processor):
        return processor
    raise CapacityInvalid(
        f"DP processor must be a Pipeline, a callable, or None, "
        f"got {type(processor).__name__}")


def _outputs_of(result) -> list[bytes]:
    if result is None:
        return []
    if isinstance(result, bytes):
        return [result]
    return list(result)


@dataclass
class _Dp:
    id: int
    pair: RingPair
    process: object
    draining: bool = False
    processed: int = 0
    by_version: dict = field(default_factory=dict)


class _FlowState:
    """Per-flow ingress/egress sequence bookkeeping."""

    __slots__ = ("next_seq", "next_out", "held", "gone")

    def __init__(self):
        self.next_seq = 0       # next ingress sequence number to assign
        self.next_out = 0       # next sequence number to release at egress
        self.held = {}          # seq -> ChainPacket completed out of order
        self.gone = set()       # seqs lost in flight (drops / consumption)


class BoxShim:
    """The box's central IO process plus its registered DP processes."""

    def __init__(self, capacity: int = DEFAULT_RING_CAPACITY):
        if not isinstance(capacity, int) or isinstance(capacity, bool) \
                or capacity <= 0:
            raise CapacityInvalid(f"default ring capacity must be a "
                                  f"positive integer, got {capacity!r}")
        self.default_capacity = capacity
        self._dps: dict[int, _Dp] = {}
        self._rings: dict[int, RingPair] = {}
        self._templates: dict[str, ChainTemplate] = {}
        self._flows: dict[str, _FlowState] = {}
        self._next_dp = 0
        self._next_ring = 0
        self._next_version = 1
        self._ingress_ord = 0
        self._outstanding: dict[int, int] = {}   # ring id -> in-flight stamps
        self._in_flight_version: dict[int, int] = {}
        self._egress_ready: list[ChainPacket] = []
        self.tick = 0
        self.ingress_accepted = 0
        self.egressed = 0
        self.back_pressure_drops = 0
        self.consumed = 0
        self.surplus = 0
        self.egress_log: list[ChainPacket] = []
        self._lost_by_flow: dict[str, int] = {}

    # ------------------------------------------------------------ control

    def register_dp(self, processor=None, capacity: int | None = None
                    ) -> tuple[int, int]:
        """Start a DP process; returns (dp id, ring-pair id)."""
        cap = self.default_capacity if capacity is None else capacity
        if not isinstance(cap, int) or isinstance(cap, bool) or cap <= 0:
            raise CapacityInvalid(f"ring capacity must be a positive "
                                  f"integer, got {cap!r}")
        dp_id = self._next_dp
        ring_id = self._next_ring
        self._next_dp += 1
        self._next_ring += 1
        pair = RingPair(id=ring_id, to_dp=Ring(cap), from_dp=Ring(cap),
                        owner=dp_id)
        self._rings[ring_id] = pair
        self._dps[dp_id] = _Dp(id=dp_id, pair=pair,
                               process=_as_processor(processor))
        self._outstanding[ring_id] = 0
        return dp_id, ring_id

    def set_chain(self, flow: str, dp_ids: list[int]) -> int:
        """Atomically replace the flow's template; returns its version."""
        rings = []
        for dp_id in dp_ids:
            dp = self._dps.get(dp_id)
            if dp is None or dp.draining:
                raise UnknownDp(f"no live DP process {dp_id!r}")
            rings.append(dp.pair.id)
        version = self._next_version
        self._next_version += 1
        self._templates[flow] = ChainTemplate(tuple(rings), version)
        return version

    def drop_chain(self, flow: str) -> bool:
        """Forget the flow's template (in-flight packets still finish)."""
        return self._templates.pop(flow, None) is not None

    def remove_dp(self, dp_id: int) -> bool:
        """Tear down a DP once nothing references it.

        Raises StillReferenced while any flow's current template lists
        the DP.  Otherwise the DP stops accepting new templates and the
        call reports whether its rings are quiescent: True means the
        ring pair was freed, False means packets are still outstanding
        and the caller should poll again after more ticks.
        """
        dp = self._dps.get(dp_id)
        if dp is None:
            raise UnknownDp(f"no DP process {dp_id!r}")
        holders = [flow for flow, tpl in self._templates.items()
                   if dp.pair.id in tpl.rings]
        if holders:
            raise StillReferenced(
                f"DP {dp_id} is referenced by template(s) of "
                f"{', '.join(sorted(holders))}")
        dp.draining = True
        if self._outstanding[dp.pair.id] > 0:
            return False
        del self._dps[dp_id]
        del self._rings[dp.pair.id]
        del self._outstanding[dp.pair.id]
        return True

    # ------------------------------------------------------------- data

    def ingress(self, flow: str, data) -> bool:
        """Stamp a packet with the flow's current template and queue it."""
        if isinstance(data, str):
            data = bytes.fromhex(data)
        template = self._templates.get(flow)
        if template is None:
            template = ChainTemplate((), 0)  # unknown flow: pass-through
        state = self._flows.setdefault(flow, _FlowState())
        packet = ChainPacket(flow=flow, data=data, rings=template.rings,
                             index=0, version=template.version,
                             seq=state.next_seq, order=self._ingress_ord)
        if not packet.rings:
            state.next_seq += 1
            self._ingress_ord += 1
            self.ingress_accepted += 1
            self._bump_version(packet.version, +1)
            self._release(packet)
            return True
        first = self._rings[packet.rings[0]]
        if not first.to_dp.push(packet):
            self.back_pressure_drops += 1
            return False
        state.next_seq += 1
        self._ingress_ord += 1
        self.ingress_accepted += 1
        self._bump_version(packet.version, +1)
        for ring_id in packet.rings:
            self._outstanding[ring_id] += 1
        return True

    def step(self) -> list[ChainPacket]:
        """One tick: DPs drain their rings, then the IO process forwards."""
        self.tick += 1
        for dp in self._dps.values():
            for _ in range(DRAIN_BUDGET):
                packet = dp.pair.to_dp.pop()
                if packet is None:
                    break
                dp.processed += 1
                dp.by_version[packet.version] = \
                    dp.by_version.get(packet.version, 0) + 1
                outs = _outputs_of(dp.process(packet.data))
                if not outs:
                    self.consumed += 1
                    self._lose(packet)
                    continue
                if len(outs) > 1:
                    self.surplus += len(outs) - 1
                packet.data = outs[0]
                if not dp.pair.from_dp.push(packet):
                    self.back_pressure_drops += 1
                    self._lose(packet)
        returned: list[ChainPacket] = []
        for ring_id in sorted(self._rings):
            pair = self._rings[ring_id]
            while True:
                packet = pair.from_dp.pop()
                if packet is None:
                    break
                returned.append(packet)
        returned.sort(key=lambda p: p.order)
        for packet in returned:
            self._outstanding[packet.rings[packet.index]] -= 1
            packet.index += 1
            if packet.index == len(packet.rings):
                self._release(packet)
                continue
            nxt = self._rings[packet.rings[packet.index]]
            if not nxt.to_dp.push(packet):
                self.back_pressure_drops += 1
                self._lose(packet)
        out = self._egress_ready
        self._egress_ready = []
        return out

    def run(self, ticks: int) -> list[ChainPacket]:
        """Run ``ticks`` steps, returning everything egressed."""
        out: list[ChainPacket] = []
        for _ in range(ticks):
            out.extend(self.step())
        return out

    # ------------------------------------------------------- bookkeeping

    def _bump_version(self, version: int, delta: int):
        count = self._in_flight_version.get(version, 0) + delta
        if count:
            self._in_flight_version[version] = count
        else:
            self._in_flight_version.pop(version, None)

    def _lose(self, packet: ChainPacket):
        """A packet died in flight: settle counters and unblock egress."""
        for ring_id in packet.remaining:
            self._outstanding[ring_id] -= 1
        self._bump_version(packet.version, -1)
        self._lost_by_flow[packet.flow] = \
            self._lost_by_flow.get(packet.flow, 0) + 1
        state = self._flows[packet.flow]
        state.gone.add(packet.seq)
        self._drain_ready(state)

    def take_losses(self) -> dict[str, int]:
        """In-flight losses per flow key since the last call."""
        losses, self._lost_by_flow = self._lost_by_flow, {}
        return losses

    def _release(self, packet: ChainPacket):
        """Hand a completed packet to the egress sequencer."""
        state = self._flows[packet.flow]
        state.held[packet.seq] = packet
        self._drain_ready(state)

    def _drain_ready(self, state: _FlowState):
        """Move every in-order completed packet to the egress-ready list."""
        while True:
            if state.next_out in state.gone:
                state.gone.discard(state.next_out)
                state.next_out += 1
                continue
            packet = state.held.pop(state.next_out, None)
            if packet is None:
                break
            state.next_out += 1
            self._bump_version(packet.version, -1)
            self.egressed += 1
            self.egress_log.append(packet)
            self._egress_ready.append(packet)

    # ------------------------------------------------------------- stats

    def quiescent(self) -> bool:
        return all(v == 0 for v in self._outstanding.values()) and \
            all(not s.held for s in self._flows.values())

    def stats(self) -> dict:
        return {
            "tick": self.tick,
            "ingress_accepted": self.ingress_accepted,
            "egressed": self.egressed,
            "back_pressure_drops": self.back_pressure_drops,
            "consumed": self.consumed,
            "surplus": self.surplus,
            "rings": {
                str(rid): {
                    "owner": pair.owner,
                    "to_dp": len(pair.to_dp),
                    "from_dp": len(pair.from_dp),
                    "outstanding": self._outstanding[rid],
                }
                for rid, pair in sorted(self._rings.items())
            },
            "dps": {
                str(dp.id): {
                    "ring": dp.pair.id,
                    "draining": dp.draining,
                    "processed": dp.processed,
                    "by_version": {str(v): c
                                   for v, c in sorted(dp.by_version.items())},
                }
                for dp in self._dps.values()
            },
            "templates": {
                flow: {"rings": list(tpl.rings), "version": tpl.version}
                for flow, tpl in sorted(self._templates.items())
            },
            "in_flight_by_version": {
                str(v): c for v, c in sorted(self._in_flight_version.items())
            },
            "held_for_order": sum(len(s.held) for s in self._flows.values()),
        }
