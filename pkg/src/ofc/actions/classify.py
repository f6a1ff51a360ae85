"""One-to-many classifiers: exact match, LPM, ACL first-match, pattern."""

from __future__ import annotations

import ipaddress

from ..errors import ArityMismatch, DefaultRouteMissing
from ..packet import FieldRef, Packet, Region, ValueType
from .base import ActionInstance, Category

_SYMBOLIC_RULES = {
    "PROTO_IP": "12/0800",
    "PROTO_ARP": "12/0806",
    "PROTO_IPV6": "12/86dd",
}

_IP_PROTO = FieldRef(Region.NETWORK, 9, ValueType.UINT8)
_IP_SRC = FieldRef(Region.NETWORK, 12, ValueType.UINT32)
_IP_DST = FieldRef(Region.NETWORK, 16, ValueType.UINT32)


class ExactMatch(ActionInstance):
    """Byte-exact match rules tried in priority order; each argument is
    offset/hexvalue or a symbolic shorthand, '-' for wildcard; a packet
    leaves on the first matching rule's port."""

    NAME = "ExactMatch"
    CATEGORY = Category.ONE_TO_MANY
    PARAM_HELP = "(offset/hex | symbol | - , ...)"

    def _setup(self, args):
        if len(args) < 2:
            raise ArityMismatch("ExactMatch needs at least two rules")
        self.rules: list[tuple[int, bytes] | None] = []
        for arg in args:
            arg = _SYMBOLIC_RULES.get(arg, arg)
            if arg == "-":
                self.rules.append(None)
                continue
            if "/" not in arg:
                raise ArityMismatch(f"bad ExactMatch rule {arg!r}")
            off_s, _, hex_s = arg.partition("/")
            try:
                offset = int(off_s, 0)
                value = bytes.fromhex(hex_s)
            except ValueError:
                raise ArityMismatch(f"bad ExactMatch rule {arg!r}") from None
            if offset < 0 or not value:
                raise ArityMismatch(f"bad ExactMatch rule {arg!r}")
            self.rules.append((offset, value))
        self.n_out = len(self.rules)

    def handle(self, packet: Packet, in_port: int = 0):
        self.packets_in += 1
        data = packet.payload
        for port, rule in enumerate(self.rules):
            if rule is None:
                self.packets_out += 1
                return [(port, packet)]
            offset, value = rule
            if offset + len(value) <= len(data) and \
                    data[offset:offset + len(value)] == value:
                self.packets_out += 1
                return [(port, packet)]
        self.dropped += 1
        return []


class LpmMatch(ActionInstance):
    """Longest-prefix match on the IPv4 destination; port = index of
    the winning prefix argument."""

    NAME = "LpmMatch"
    CATEGORY = Category.ONE_TO_MANY
    PARAM_HELP = "(prefix, ...)"

    def _setup(self, args):
        if len(args) < 2:
            raise ArityMismatch("LpmMatch needs at least two prefixes")
        self.prefixes = []
        for arg in args:
            try:
                net = ipaddress.IPv4Network(arg, strict=False)
            except ValueError:
                raise ArityMismatch(f"bad prefix {arg!r}") from None
            self.prefixes.append((int(net.network_address), net.prefixlen))
        self.n_out = len(self.prefixes)

    def handle(self, packet: Packet, in_port: int = 0):
        self.packets_in += 1
        dst = packet.read_field(_IP_DST)
        best_port, best_len = None, -1
        for port, (net, plen) in enumerate(self.prefixes):
            mask = 0 if plen == 0 else (~0 << (32 - plen)) & 0xFFFFFFFF
            if dst & mask == net & mask and plen > best_len:
                best_port, best_len = port, plen
        if best_port is None:
            raise DefaultRouteMissing(
                f"{self.name}: no prefix covers {dst:#010x}")
        self.packets_out += 1
        return [(best_port, packet)]


def _parse_acl_rule(text: str):
    """proto/src/sport/dst/dport with * wildcards, or 'any'."""
    if text == "any":
        return None
    parts = text.split("/")
    if len(parts) != 5:
        raise ArityMismatch(f"bad ACL rule {text!r}")
    proto_s, src_s, sport_s, dst_s, dport_s = parts
    protos = {"tcp": 6, "udp": 17, "icmp": 1}
    proto = None if proto_s == "*" else protos.get(proto_s)
    if proto is None and proto_s != "*":
        try:
            proto = int(proto_s, 0)
        except ValueError:
            raise ArityMismatch(f"bad ACL protocol {proto_s!r}") from None

    def addr(s):
        return None if s == "*" else int(ipaddress.IPv4Address(s))

    def port(s):
        return None if s == "*" else int(s, 0)

    try:
        return (proto, addr(src_s), port(sport_s), addr(dst_s), port(dport_s))
    except (ValueError, ipaddress.AddressValueError):
        raise ArityMismatch(f"bad ACL rule {text!r}") from None


class FirstMatch(ActionInstance):
    """ACL-style five-tuple rules; the packet leaves on the index of
    the first rule it satisfies."""

    NAME = "FirstMatch"
    CATEGORY = Category.ONE_TO_MANY
    PARAM_HELP = "(proto/src/sport/dst/dport | any, ...)"

    def _setup(self, args):
        if len(args) < 2:
            raise ArityMismatch("FirstMatch needs at least two rules")
        self.rules = [_parse_acl_rule(a) for a in args]
        self.n_out = len(self.rules)

    def handle(self, packet: Packet, in_port: int = 0):
        self.packets_in += 1
        tup = _five_tuple(packet)
        for port, rule in enumerate(self.rules):
            if rule is None or _acl_hit(rule, tup):
                self.packets_out += 1
                return [(port, packet)]
        self.dropped += 1
        return []


def _five_tuple(p: Packet):
    proto = p.read_field(_IP_PROTO)
    src = p.read_field(_IP_SRC)
    dst = p.read_field(_IP_DST)
    sport = dport = None
    if proto in (6, 17) and Region.TRANSPORT in p.layer_offsets:
        sport = p.read_field(FieldRef(Region.TRANSPORT, 0, ValueType.UINT16))
        dport = p.read_field(FieldRef(Region.TRANSPORT, 2, ValueType.UINT16))
    return proto, src, sport, dst, dport


def _acl_hit(rule, tup) -> bool:
    r_proto, r_src, r_sport, r_dst, r_dport = rule
    proto, src, sport, dst, dport = tup
    if r_proto is not None and proto != r_proto:
        return False
    if r_src is not None and src != r_src:
        return False
    if r_dst is not None and dst != r_dst:
        return False
    if r_sport is not None and sport != r_sport:
        return False
    if r_dport is not None and dport != r_dport:
        return False
    return True


class PatternMatch(ActionInstance):
    """Scans the application payload (whole payload when APP is not
    marked) for literal signatures. Hits leave on port 0 with a
    pattern_hit event naming the earliest-starting signature; misses
    leave on port 1."""

    NAME = "PatternMatch"
    CATEGORY = Category.ONE_TO_MANY
    PARAM_HELP = "(signature, ...)"
    EVENT_NAMES = ("pattern_hit",)

    def _setup(self, args):
        if not args:
            raise ArityMismatch("PatternMatch needs at least one signature")
        self.signatures = []
        for arg in args:
            if arg.startswith("0x"):
                self.signatures.append(bytes.fromhex(arg[2:]))
            else:
                self.signatures.append(arg.encode())
        if any(not s for s in self.signatures):
            raise ArityMismatch("signatures must be nonempty")
        self.n_out = 2

    def handle(self, packet: Packet, in_port: int = 0):
        self.packets_in += 1
        data = packet.payload
        base = packet.layer_offsets.get(Region.APP, 0)
        haystack = data[base:]
        best = None  # (start offset, signature index)
        for idx, sig in enumerate(self.signatures):
            at = haystack.find(sig)
            if at >= 0 and (best is None or at < best[0]):
                best = (at, idx)
        self.packets_out += 1
        if best is None:
            return [(1, packet)]
        self.emit("pattern_hit", best[1].to_bytes(2, "big")
                  + best[0].to_bytes(4, "big"))
        return [(0, packet)]
