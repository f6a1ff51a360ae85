"""Packet model: byte buffer with headroom/tailroom, layer offsets,
metadata objects, and read-only properties.

Multi-byte values are big-endian. Layer offsets are relative to byte 0
of the current payload and are kept consistent across encap/decap.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import (
    InsufficientHeadroom,
    InsufficientTailroom,
    OutOfBounds,
    PropertyWriteForbidden,
    TypeMismatch,
    Underflow,
    UnknownName,
    UnmarkedRegion,
)

DEFAULT_ROOM = 128

ETHERTYPE_IPV4 = 0x0800
PROTO_TCP = 6
PROTO_UDP = 17
PROTO_ESP = 50


class Region(enum.Enum):
    LINK = "LINK"
    NETWORK = "NETWORK"
    TRANSPORT = "TRANSPORT"
    APP = "APP"
    PACKET = "PACKET"      # pseudo-region anchored at byte 0


class ValueType(enum.Enum):
    UINT8 = "UINT8"
    UINT16 = "UINT16"
    UINT32 = "UINT32"
    DATA = "DATA"

    @property
    def width(self) -> int | None:
        return {"UINT8": 1, "UINT16": 2, "UINT32": 4}.get(self.value)

    @property
    def bits(self) -> int | None:
        w = self.width
        return None if w is None else 8 * w


@dataclass(frozen=True)
class FieldRef:
    """A typed window into the packet: region base + offset + type."""

    region: Region
    offset: int
    vtype: ValueType
    length: int = 0        # byte length, DATA only

    def byte_length(self) -> int:
        if self.vtype is ValueType.DATA:
            return self.length
        return self.vtype.width


@dataclass
class MetaObject:
    vtype: ValueType
    value: int | bytes


PROPERTIES = ("pkt_len", "ingress_port", "timestamp")


class Packet:
    """A frame in flight: mutable bytes plus per-packet bookkeeping."""

    __slots__ = ("_buf", "_start", "_end", "layer_offsets", "metadata",
                 "_ingress_port", "_timestamp")

    def __init__(self, data: bytes, headroom: int = DEFAULT_ROOM,
                 tailroom: int = DEFAULT_ROOM, ingress_port: int = 0,
                 timestamp: int = 0):
        if headroom < 0 or tailroom < 0:
            raise ValueError("rooms must be nonnegative")
        self._buf = bytearray(headroom) + bytearray(data) + bytearray(tailroom)
        self._start = headroom
        self._end = headroom + len(data)
        self.layer_offsets: dict[Region, int] = {}
        self.metadata: dict[str, MetaObject] = {}
        self._ingress_port = ingress_port
        self._timestamp = timestamp

    # ------------------------------------------------------------ views

    @property
    def payload(self) -> bytes:
        return bytes(self._buf[self._start:self._end])

    def __len__(self) -> int:
        return self._end - self._start

    @property
    def headroom(self) -> int:
        return self._start

    @property
    def tailroom(self) -> int:
        return len(self._buf) - self._end

    @property
    def properties(self) -> dict[str, int]:
        return {"pkt_len": len(self), "ingress_port": self._ingress_port,
                "timestamp": self._timestamp}

    def read_prop(self, name: str) -> int:
        if name == "pkt_len":
            return len(self)
        if name == "ingress_port":
            return self._ingress_port
        if name == "timestamp":
            return self._timestamp
        raise UnknownName(f"no property {name!r}")

    def write_prop(self, name: str, value: int):
        raise PropertyWriteForbidden(f"property {name!r} is read-only")

    def clone(self) -> "Packet":
        p = Packet.__new__(Packet)
        p._buf = bytearray(self._buf)
        p._start = self._start
        p._end = self._end
        p.layer_offsets = dict(self.layer_offsets)
        p.metadata = {k: MetaObject(m.vtype, m.value)
                      for k, m in self.metadata.items()}
        p._ingress_port = self._ingress_port
        p._timestamp = self._timestamp
        return p

    # ----------------------------------------------------------- fields

    def _resolve(self, ref: FieldRef) -> tuple[int, int]:
        """Map a field ref to (absolute payload offset, byte length)."""
        if ref.region is Region.PACKET:
            base = 0
        else:
            try:
                base = self.layer_offsets[ref.region]
            except KeyError:
                raise UnmarkedRegion(f"{ref.region.value} offset not marked") from None
        length = ref.byte_length()
        lo = base + ref.offset
        if lo < 0 or length < 0 or lo + length > len(self):
            raise OutOfBounds(
                f"{ref.region.value}+{ref.offset} width {length} exceeds "
                f"payload of {len(self)} bytes")
        return lo, length

    def read_field(self, ref: FieldRef) -> int | bytes:
        lo, length = self._resolve(ref)
        raw = bytes(self._buf[self._start + lo:self._start + lo + length])
        if ref.vtype is ValueType.DATA:
            return raw
        return int.from_bytes(raw, "big")

    def write_field(self, ref: FieldRef, value: int | bytes) -> "Packet":
        lo, length = self._resolve(ref)
        if ref.vtype is ValueType.DATA:
            if not isinstance(value, (bytes, bytearray)):
                raise TypeMismatch("DATA fields take bytes")
            if len(value) != length:
                raise TypeMismatch(
                    f"DATA field holds {length} bytes, got {len(value)}")
            raw = bytes(value)
        else:
            if not isinstance(value, int):
                raise TypeMismatch("integer field takes an int")
            raw = (value & ((1 << ref.vtype.bits) - 1)).to_bytes(length, "big")
        self._buf[self._start + lo:self._start + lo + length] = raw
        return self

    # ------------------------------------------------------ encap/decap

    def _shift_offsets(self, delta: int):
        updated = {}
        for region, off in self.layer_offsets.items():
            moved = off + delta
            if 0 <= moved < len(self):
                updated[region] = moved
        self.layer_offsets = updated

    def encap_head(self, data: bytes) -> "Packet":
        n = len(data)
        if n > self._start:
            raise InsufficientHeadroom(
                f"need {n} bytes of headroom, have {self._start}")
        self._start -= n
        self._buf[self._start:self._start + n] = data
        self._shift_offsets(n)
        return self

    def decap_head(self, n: int) -> "Packet":
        if n < 0:
            raise ValueError("decap length must be nonnegative")
        if n > len(self):
            raise Underflow(f"cannot strip {n} bytes from {len(self)}")
        self._start += n
        self._shift_offsets(-n)
        return self

    def pad_tail(self, data: bytes) -> "Packet":
        n = len(data)
        if n > self.tailroom:
            raise InsufficientTailroom(
                f"need {n} bytes of tailroom, have {self.tailroom}")
        self._buf[self._end:self._end + n] = data
        self._end += n
        return self

    def unpad_tail(self, n: int) -> "Packet":
        if n < 0:
            raise ValueError("unpad length must be nonnegative")
        if n > len(self):
            raise Underflow(f"cannot trim {n} bytes from {len(self)}")
        self._end -= n
        self._shift_offsets(0)  # drop offsets stranded past the new end
        return self

    # ---------------------------------------------------------- layers

    def mark_layer(self, region: Region, offset: int) -> "Packet":
        if region is Region.PACKET:
            raise ValueError("PACKET is implicit and cannot be marked")
        if not 0 <= offset < len(self):
            raise OutOfBounds(f"layer offset {offset} outside payload")
        self.layer_offsets[region] = offset
        return self

    def clear_layers(self, *regions: Region) -> "Packet":
        for region in regions or tuple(self.layer_offsets):
            self.layer_offsets.pop(region, None)
        return self

    def mark_layers(self) -> "Packet":
        """Parse Ethernet/IPv4/TCP|UDP framing and set layer offsets."""
        self.layer_offsets = {}
        data = self.payload
        if len(data) < 1:
            return self
        self.layer_offsets[Region.LINK] = 0
        if len(data) < 14:
            return self
        ethertype = int.from_bytes(data[12:14], "big")
        if ethertype != ETHERTYPE_IPV4 or len(data) <= 14:
            return self
        self.layer_offsets[Region.NETWORK] = 14
        ip = data[14:]
        if len(ip) < 20 or ip[0] >> 4 != 4:
            return self
        ihl = (ip[0] & 0x0F) * 4
        if ihl < 20 or len(ip) < ihl:
            return self
        proto = ip[9]
        transport = 14 + ihl
        if proto not in (PROTO_TCP, PROTO_UDP) or transport >= len(data):
            return self
        self.layer_offsets[Region.TRANSPORT] = transport
        seg = data[transport:]
        if proto == PROTO_TCP:
            if len(seg) < 20:
                return self
            app = transport + ((seg[12] >> 4) * 4)
        else:
            if len(seg) < 8:
                return self
            app = transport + 8
        if app < len(data):
            self.layer_offsets[Region.APP] = app
        return self

    # --------------------------------------------------------- metadata

    def read_meta(self, name: str) -> int | bytes:
        try:
            return self.metadata[name].value
        except KeyError:
            raise UnknownName(f"no metadata {name!r}") from None

    def write_meta(self, name: str, vtype: ValueType, value: int | bytes) -> "Packet":
        existing = self.metadata.get(name)
        if existing is not None and existing.vtype is not vtype:
            raise TypeMismatch(
                f"metadata {name!r} is {existing.vtype.value}, not {vtype.value}")
        if vtype is ValueType.DATA:
            if not isinstance(value, (bytes, bytearray)):
                raise TypeMismatch("DATA metadata takes bytes")
            value = bytes(value)
            if existing is not None and len(existing.value) != len(value):
                raise TypeMismatch(
                    f"metadata {name!r} holds {len(existing.value)} bytes, "
                    f"got {len(value)}")
        else:
            if not isinstance(value, int):
                raise TypeMismatch("integer metadata takes an int")
            value &= (1 << vtype.bits) - 1
        self.metadata[name] = MetaObject(vtype, value)
        return self

    def __repr__(self) -> str:
        marks = {r.value: o for r, o in self.layer_offsets.items()}
        return f"Packet(len={len(self)}, layers={marks})"


def new_packet(data: bytes | str, headroom: int = DEFAULT_ROOM,
               tailroom: int = DEFAULT_ROOM, ingress_port: int = 0,
               timestamp: int = 0) -> Packet:
    """Build a packet from bytes or a hex string."""
    if isinstance(data, str):
        data = bytes.fromhex(data.strip())
    return Packet(data, headroom=headroom, tailroom=tailroom,
                  ingress_port=ingress_port, timestamp=timestamp)
