"""Stateful middlebox actions: NAT, TCP firewall, FTP intrusion guard.

NAT holds unknown-flow packets until the control plane installs a
mapping (an attribute write); releases surface through take_pending so
the runtime forwards them on the next tick.
"""

from __future__ import annotations

import ipaddress
from collections import OrderedDict

from .. import checksum as ck
from ..errors import ArityMismatch, TypeMismatch
from ..packet import FieldRef, Packet, Region, ValueType
from .base import ActionInstance, AttributeSpec, Category

_IP_PROTO = FieldRef(Region.NETWORK, 9, ValueType.UINT8)
_IP_CSUM = FieldRef(Region.NETWORK, 10, ValueType.UINT16)
_IP_SRC = FieldRef(Region.NETWORK, 12, ValueType.UINT32)
_IP_DST = FieldRef(Region.NETWORK, 16, ValueType.UINT32)
_SPORT = FieldRef(Region.TRANSPORT, 0, ValueType.UINT16)
_DPORT = FieldRef(Region.TRANSPORT, 2, ValueType.UINT16)
_TCP_FLAGS = FieldRef(Region.TRANSPORT, 13, ValueType.UINT8)

TCP, UDP = 6, 17


def _l4_csum_ref(proto: int) -> FieldRef | None:
    if proto == TCP:
        return FieldRef(Region.TRANSPORT, 16, ValueType.UINT16)
    if proto == UDP:
        return FieldRef(Region.TRANSPORT, 6, ValueType.UINT16)
    return None


def _patch_l4(p: Packet, proto: int, old_words: list[int], new_words: list[int]):
    """Incrementally fix the transport checksum after header rewrites."""
    ref = _l4_csum_ref(proto)
    if ref is None:
        return
    csum = p.read_field(ref)
    if proto == UDP and csum == 0:
        return  # checksum disabled
    for old, new in zip(old_words, new_words):
        csum = ck.incremental_update(csum, old, new)
    p.write_field(ref, csum)


def _patch_ip(p: Packet, old_addr: int, new_addr: int):
    csum = p.read_field(_IP_CSUM)
    csum = ck.incremental_update(csum, old_addr >> 16, new_addr >> 16)
    csum = ck.incremental_update(csum, old_addr & 0xFFFF, new_addr & 0xFFFF)
    p.write_field(_IP_CSUM, csum)


class Nat(ActionInstance):
    """Source NAT behind one public address. Translation mappings are
    installed by the control plane; the first packet of an unknown
    outbound flow raises new_flow and is held (bounded per flow)."""

    NAME = "Nat"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "(public_ip [, hold_limit])"
    EVENT_NAMES = ("new_flow",)

    def _setup(self, args):
        if not 1 <= len(args) <= 2:
            raise ArityMismatch("Nat takes public_ip and optional hold limit")
        try:
            self.public_ip = int(ipaddress.IPv4Address(args[0]))
        except ipaddress.AddressValueError:
            raise ArityMismatch(f"bad address {args[0]!r}") from None
        self.hold_limit = int(args[1], 0) if len(args) == 2 else 64
        # forward: (proto, src_ip, src_port) -> public_port
        self.forward: dict[tuple[int, int, int], int] = {}
        # reverse: (proto, public_port) -> (src_ip, src_port)
        self.reverse: dict[tuple[int, int], tuple[int, int]] = {}
        self.holds: OrderedDict[tuple[int, int, int], list[Packet]] = OrderedDict()
        self._pending: list[tuple[int, Packet]] = []
        self.declare_attr(AttributeSpec("add_mapping", ValueType.DATA))
        self.declare_attr(AttributeSpec("mappings", ValueType.UINT32))
        super(Nat, self).set_attribute("mappings", 0)

    def set_attribute(self, name, value, phase="runtime"):
        super().set_attribute(name, value, phase)
        if name == "add_mapping":
            self._install(self.get_attribute("add_mapping"))

    def _install(self, blob: bytes):
        """proto(1) src_ip(4) src_port(2) public_port(2), big-endian."""
        if len(blob) != 9:
            raise TypeMismatch("mapping blob must be 9 bytes")
        proto = blob[0]
        src_ip = int.from_bytes(blob[1:5], "big")
        src_port = int.from_bytes(blob[5:7], "big")
        pub_port = int.from_bytes(blob[7:9], "big")
        key = (proto, src_ip, src_port)
        self.forward[key] = pub_port
        self.reverse[(proto, pub_port)] = (src_ip, src_port)
        super(Nat, self).set_attribute("mappings", len(self.forward))
        for held in self.holds.pop(key, []):
            self.held -= 1
            self._translate_out(held)
            self._pending.append((0, held))

    def take_pending(self):
        out, self._pending = self._pending, []
        self.packets_out += len(out)
        return out

    def _translate_out(self, p: Packet):
        proto = p.read_field(_IP_PROTO)
        old_ip = p.read_field(_IP_SRC)
        old_port = p.read_field(_SPORT)
        pub_port = self.forward[(proto, old_ip, old_port)]
        p.write_field(_IP_SRC, self.public_ip)
        _patch_ip(p, old_ip, self.public_ip)
        p.write_field(_SPORT, pub_port)
        _patch_l4(p, proto,
                  [old_ip >> 16, old_ip & 0xFFFF, old_port],
                  [self.public_ip >> 16, self.public_ip & 0xFFFF, pub_port])

    def handle(self, packet: Packet, in_port: int = 0):
        self.packets_in += 1
        proto = packet.read_field(_IP_PROTO)
        if proto not in (TCP, UDP):
            self.packets_out += 1
            return [(0, packet)]
        if packet.read_field(_IP_DST) == self.public_ip:
            # reverse direction: restore the original endpoint
            key = (proto, packet.read_field(_DPORT))
            if key not in self.reverse:
                self.dropped += 1
                return []
            orig_ip, orig_port = self.reverse[key]
            old_ip = packet.read_field(_IP_DST)
            old_port = packet.read_field(_DPORT)
            packet.write_field(_IP_DST, orig_ip)
            _patch_ip(packet, old_ip, orig_ip)
            packet.write_field(_DPORT, orig_port)
            _patch_l4(packet, proto,
                      [old_ip >> 16, old_ip & 0xFFFF, old_port],
                      [orig_ip >> 16, orig_ip & 0xFFFF, orig_port])
            self.packets_out += 1
            return [(0, packet)]
        key = (proto, packet.read_field(_IP_SRC), packet.read_field(_SPORT))
        if key in self.forward:
            self._translate_out(packet)
            self.packets_out += 1
            return [(0, packet)]
        held = self.holds.setdefault(key, [])
        if len(held) >= self.hold_limit:
            self.dropped += 1
            return []
        if not held:
            self.emit("new_flow", bytes([proto])
                      + key[1].to_bytes(4, "big") + key[2].to_bytes(2, "big")
                      + packet.read_field(_IP_DST).to_bytes(4, "big")
                      + packet.read_field(_DPORT).to_bytes(2, "big"))
        held.append(packet)
        self.held += 1
        return []


def _canon(a_ip, a_port, b_ip, b_port):
    return ((a_ip, a_port, b_ip, b_port) if (a_ip, a_port) <= (b_ip, b_port)
            else (b_ip, b_port, a_ip, a_port))


class StatefulFirewall(ActionInstance):
    """TCP connection tracker: SYN installs an allow entry covering
    both directions, RST tears it down; port 0 allows, port 1 denies."""

    NAME = "StatefulFirewall"
    CATEGORY = Category.ONE_TO_MANY
    PARAM_HELP = "()"

    def _setup(self, args):
        if args:
            raise ArityMismatch("StatefulFirewall takes no arguments")
        self.n_out = 2
        self.entries: set[tuple] = set()
        self.declare_attr(AttributeSpec("entries", ValueType.UINT32))
        super(StatefulFirewall, self).set_attribute("entries", 0)

    def _sync_count(self):
        super(StatefulFirewall, self).set_attribute("entries",
                                                    len(self.entries))

    def handle(self, packet: Packet, in_port: int = 0):
        self.packets_in += 1
        self.packets_out += 1
        if (packet.read_field(_IP_PROTO) != TCP
                or Region.TRANSPORT not in packet.layer_offsets):
            return [(1, packet)]
        key = _canon(packet.read_field(_IP_SRC), packet.read_field(_SPORT),
                     packet.read_field(_IP_DST), packet.read_field(_DPORT))
        flags = packet.read_field(_TCP_FLAGS)
        if flags & 0x04:  # RST drops the allow entry in both directions
            if key in self.entries:
                self.entries.discard(key)
                self._sync_count()
                return [(0, packet)]
            return [(1, packet)]
        if key in self.entries:
            return [(0, packet)]
        if flags & 0x02 and not flags & 0x10:  # fresh SYN opens the pinhole
            self.entries.add(key)
            self._sync_count()
            return [(0, packet)]
        return [(1, packet)]


_FTP_RESTRICTED = {"RETR", "STOR", "DELE", "LIST", "APPE", "NLST", "RNFR"}


class FtpIps(ActionInstance):
    """FTP command guard: data-transfer commands issued before USER and
    PASS complete raise an alert and leave on the block port (1)."""

    NAME = "FtpIps"
    CATEGORY = Category.ONE_TO_MANY
    PARAM_HELP = "()"
    EVENT_NAMES = ("alert",)

    def _setup(self, args):
        if args:
            raise ArityMismatch("FtpIps takes no arguments")
        self.n_out = 2
        self.sessions: dict[tuple, str] = {}  # canon key -> auth state

    def handle(self, packet: Packet, in_port: int = 0):
        self.packets_in += 1
        self.packets_out += 1
        if (packet.read_field(_IP_PROTO) != TCP
                or Region.TRANSPORT not in packet.layer_offsets):
            return [(0, packet)]
        dport = packet.read_field(_DPORT)
        sport = packet.read_field(_SPORT)
        if 21 not in (sport, dport):
            return [(0, packet)]
        key = _canon(packet.read_field(_IP_SRC), sport,
                     packet.read_field(_IP_DST), dport)
        flags = packet.read_field(_TCP_FLAGS)
        if flags & 0x05:  # FIN or RST ends the session
            self.sessions.pop(key, None)
            return [(0, packet)]
        if dport != 21 or Region.APP not in packet.layer_offsets:
            return [(0, packet)]
        app = packet.payload[packet.layer_offsets[Region.APP]:]
        command = app.split(b"\r\n", 1)[0].split(b" ", 1)[0].upper()
        state = self.sessions.get(key, "new")
        word = command.decode("ascii", "replace")
        if word == "USER":
            self.sessions[key] = "user_seen"
        elif word == "PASS" and state == "user_seen":
            self.sessions[key] = "authed"
        elif word in _FTP_RESTRICTED and state != "authed":
            self.emit("alert", command)
            return [(1, packet)]
        return [(0, packet)]
