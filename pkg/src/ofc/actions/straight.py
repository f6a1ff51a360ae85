"""One-to-one transforms: header surgery, checksums, ciphers, counters."""

from __future__ import annotations

from cryptography.hazmat.primitives.ciphers import Cipher as _CryptoCipher
from cryptography.hazmat.primitives.ciphers import algorithms, modes

from .. import checksum as ck
from ..errors import ArityMismatch, TypeMismatch
from ..packet import (
    ETHERTYPE_IPV4,
    FieldRef,
    Packet,
    PROTO_TCP,
    Region,
    ValueType,
)
from .base import ActionInstance, AttributeSpec, Category

_SYMBOLIC_ETHERTYPE = {"PROTO_IP": ETHERTYPE_IPV4, "PROTO_ARP": 0x0806,
                       "PROTO_IPV6": 0x86DD}

_IP_TTL = FieldRef(Region.NETWORK, 8, ValueType.UINT8)
_IP_PROTO = FieldRef(Region.NETWORK, 9, ValueType.UINT8)
_IP_CSUM = FieldRef(Region.NETWORK, 10, ValueType.UINT16)
_IP_SRC = FieldRef(Region.NETWORK, 12, ValueType.UINT32)
_IP_DST = FieldRef(Region.NETWORK, 16, ValueType.UINT32)
_IP_TOTLEN = FieldRef(Region.NETWORK, 2, ValueType.UINT16)
_IP_VERIHL = FieldRef(Region.NETWORK, 0, ValueType.UINT8)


def _passthrough(handler):
    """Wrap a mutate-in-place method into the handle() contract."""
    def handle(self, packet: Packet, in_port: int = 0):
        self.packets_in += 1
        out = handler(self, packet)
        if out is None:
            self.dropped += 1
            return []
        self.packets_out += 1
        return [(0, out)]
    return handle


class DecTTL(ActionInstance):
    """Decrements IPv4 TTL, patching the header checksum; expired
    packets are dropped with a ttl_expired event."""

    NAME = "DecTTL"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "()"
    EVENT_NAMES = ("ttl_expired",)

    @_passthrough
    def _run(self, p: Packet):
        ttl = p.read_field(_IP_TTL)
        if ttl <= 1:
            self.emit("ttl_expired", bytes([ttl]))
            return None
        old_word = (ttl << 8) | p.read_field(_IP_PROTO)
        p.write_field(_IP_TTL, ttl - 1)
        new_word = ((ttl - 1) << 8) | p.read_field(_IP_PROTO)
        p.write_field(_IP_CSUM, ck.incremental_update(
            p.read_field(_IP_CSUM), old_word, new_word))
        return p

    handle = _run


class SetECN(ActionInstance):
    """Sets the ECN bits (CE) in the IPv4 TOS byte."""

    NAME = "SetECN"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "()"

    @_passthrough
    def _run(self, p: Packet):
        tos_ref = FieldRef(Region.NETWORK, 1, ValueType.UINT8)
        ver_ihl = p.read_field(_IP_VERIHL)
        tos = p.read_field(tos_ref)
        new_tos = tos | 0x03
        if new_tos != tos:
            old_word = (ver_ihl << 8) | tos
            p.write_field(tos_ref, new_tos)
            p.write_field(_IP_CSUM, ck.incremental_update(
                p.read_field(_IP_CSUM), old_word, (ver_ihl << 8) | new_tos))
        return p

    handle = _run


class DecapHeader(ActionInstance):
    """Strips n bytes from the head of the payload."""

    NAME = "DecapHeader"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "(bytes)"

    def _setup(self, args):
        if len(args) != 1:
            raise ArityMismatch("DecapHeader takes a byte count")
        self.count = int(args[0], 0)
        if self.count < 0:
            raise ArityMismatch("byte count must be nonnegative")

    @_passthrough
    def _run(self, p: Packet):
        return p.decap_head(self.count)

    handle = _run


class EncapHeader(ActionInstance):
    """Prepends an Ethernet header; MAC arguments may be literals or
    attribute names filled in by the control plane."""

    NAME = "EncapHeader"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "(dst_mac, src_mac, ethertype)"

    def _setup(self, args):
        if len(args) != 3:
            raise ArityMismatch("EncapHeader takes dst, src, ethertype")
        self._mac_sources = []
        for arg in args[:2]:
            if ":" in arg or (len(arg) == 12 and all(
                    c in "0123456789abcdefABCDEF" for c in arg)):
                self._mac_sources.append(bytes.fromhex(arg.replace(":", "")))
            else:
                self.declare_attr(AttributeSpec(arg, ValueType.DATA,
                                                config_required=True))
                self._mac_sources.append(arg)
        et = args[2]
        if et in _SYMBOLIC_ETHERTYPE:
            self._ethertype = _SYMBOLIC_ETHERTYPE[et]
        else:
            try:
                self._ethertype = int(et, 0)
            except ValueError:
                self.declare_attr(AttributeSpec(et, ValueType.UINT16,
                                                config_required=True))
                self._ethertype = et

    def _mac(self, source) -> bytes:
        if isinstance(source, bytes):
            return source
        value = self.require_attr(source)
        if len(value) != 6:
            raise TypeMismatch(f"{source} must hold 6 bytes")
        return value

    @_passthrough
    def _run(self, p: Packet):
        et = self._ethertype
        if isinstance(et, str):
            et = self.require_attr(et)
        header = self._mac(self._mac_sources[0]) + self._mac(
            self._mac_sources[1]) + et.to_bytes(2, "big")
        p.encap_head(header)
        p.mark_layer(Region.LINK, 0)
        if len(p) > 14:
            p.mark_layer(Region.NETWORK, 14)
        return p

    handle = _run


class ESPEncap(ActionInstance):
    """Prepends an ESP header (SPI + sequence); the control plane sets
    the SPI and the replay counter start, and the counter advances as
    an observable attribute."""

    NAME = "ESPEncap"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "()"

    def _setup(self, args):
        if args:
            raise ArityMismatch("ESPEncap takes no arguments")
        self.declare_attr(AttributeSpec("SPI", ValueType.UINT32))
        self.declare_attr(AttributeSpec("RPL", ValueType.UINT32))

    @_passthrough
    def _run(self, p: Packet):
        spi = self.require_attr("SPI")
        seq = self.require_attr("RPL")
        p.encap_head(spi.to_bytes(4, "big") + seq.to_bytes(4, "big"))
        self.set_attribute("RPL", (seq + 1) & 0xFFFFFFFF)
        return p

    handle = _run


_CIPHER_ALGOS = ("identity", "xor", "aes-ecb")


class CipherAction(ActionInstance):
    """Transforms whole 16-byte blocks of the payload; a trailing
    partial block passes through unchanged. Built-in algorithms:
    identity, xor (key-repeating), aes-ecb (AES-128)."""

    NAME = "Cipher"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "(identity|xor|aes-ecb [, decrypt])"

    def _setup(self, args):
        if not 1 <= len(args) <= 2:
            raise ArityMismatch("Cipher takes an algorithm and optional mode")
        algo = args[0].lower()
        if algo not in _CIPHER_ALGOS:
            raise ArityMismatch(f"unknown cipher {args[0]!r}")
        self.algo = algo
        self.decrypt = len(args) == 2 and args[1].lower() == "decrypt"
        if algo != "identity":
            self.declare_attr(AttributeSpec("key", ValueType.DATA))

    def _transform(self, block_data: bytes) -> bytes:
        if self.algo == "identity":
            return block_data
        key = self.require_attr("key")
        if self.algo == "xor":
            if not key:
                raise TypeMismatch("xor key must be nonempty")
            reps = key * (len(block_data) // len(key) + 1)
            return bytes(a ^ b for a, b in zip(block_data, reps))
        if len(key) != 16:
            raise TypeMismatch("aes-ecb needs a 16-byte key")
        cipher = _CryptoCipher(algorithms.AES(key), modes.ECB())
        ctx = cipher.decryptor() if self.decrypt else cipher.encryptor()
        return ctx.update(block_data) + ctx.finalize()

    @_passthrough
    def _run(self, p: Packet):
        data = p.payload
        nblocks = len(data) // 16
        if nblocks:
            ref = FieldRef(Region.PACKET, 0, ValueType.DATA, nblocks * 16)
            p.write_field(ref, self._transform(data[:nblocks * 16]))
        return p

    handle = _run


class Aes(CipherAction):
    """AES cipher stage; Aes(EBC) binds to the AES-128-ECB transform."""

    NAME = "Aes"
    PARAM_HELP = "(EBC [, decrypt])"

    def _setup(self, args):
        if not 1 <= len(args) <= 2:
            raise ArityMismatch("Aes takes a block mode and optional decrypt")
        if args[0].upper() not in ("EBC", "ECB"):
            raise ArityMismatch(f"unsupported AES mode {args[0]!r}")
        decrypt = ["decrypt"] if (len(args) == 2 and
                                  args[1].lower() == "decrypt") else []
        super()._setup(["aes-ecb"] + decrypt)


class IPsecEncap(ActionInstance):
    """Prepends a fresh outer IPv4 header carrying protocol 50 (ESP)
    and re-marks NETWORK at the new header."""

    NAME = "IPsecEncap"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "()"

    @_passthrough
    def _run(self, p: Packet):
        total = 20 + len(p)
        header = bytearray(20)
        header[0] = 0x45
        header[2:4] = total.to_bytes(2, "big")
        header[8] = 64
        header[9] = 50
        p.encap_head(bytes(header))
        p.clear_layers()
        p.mark_layer(Region.NETWORK, 0)
        return p

    handle = _run


class _ChangeIP(ActionInstance):
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "(attribute_name)"
    _FIELD = _IP_SRC

    def _setup(self, args):
        if len(args) != 1:
            raise ArityMismatch(f"{self.NAME} takes one attribute name")
        self.attr_name = args[0]
        self.declare_attr(AttributeSpec(args[0], ValueType.UINT32,
                                        config_required=True))

    @_passthrough
    def _run(self, p: Packet):
        new_ip = self.require_attr(self.attr_name)
        old_ip = p.read_field(self._FIELD)
        if new_ip != old_ip:
            p.write_field(self._FIELD, new_ip)
            csum = p.read_field(_IP_CSUM)
            csum = ck.incremental_update(csum, old_ip >> 16, new_ip >> 16)
            csum = ck.incremental_update(csum, old_ip & 0xFFFF,
                                         new_ip & 0xFFFF)
            p.write_field(_IP_CSUM, csum)
        return p

    handle = _run


class ChangeSrcIP(_ChangeIP):
    """Overwrites the IPv4 source address from a named attribute."""

    NAME = "ChangeSrcIP"
    _FIELD = _IP_SRC


class ChangeDstIP(_ChangeIP):
    """Overwrites the IPv4 destination address from a named attribute."""

    NAME = "ChangeDstIP"
    _FIELD = _IP_DST


def ipv4_header_span(p: Packet) -> tuple[int, int]:
    """(absolute offset, header length) of the marked IPv4 header."""
    base = p.layer_offsets.get(Region.NETWORK)
    if base is None:
        # raise through a field access for a uniform error
        p.read_field(_IP_VERIHL)
    ihl = (p.read_field(_IP_VERIHL) & 0x0F) * 4
    return base, ihl


class SetIPChecksum(ActionInstance):
    """Recomputes the IPv4 header checksum in place."""

    NAME = "SetIPChecksum"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "()"

    @_passthrough
    def _run(self, p: Packet):
        base, ihl = ipv4_header_span(p)
        p.write_field(_IP_CSUM, 0)
        header = p.read_field(FieldRef(Region.NETWORK, 0, ValueType.DATA, ihl))
        p.write_field(_IP_CSUM, ck.checksum(header))
        return p

    handle = _run


class SetTCPChecksum(ActionInstance):
    """Recomputes the TCP checksum, pseudo-header included."""

    NAME = "SetTCPChecksum"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "()"

    @_passthrough
    def _run(self, p: Packet):
        base, ihl = ipv4_header_span(p)
        total = p.read_field(_IP_TOTLEN)
        seg_len = total - ihl
        csum_ref = FieldRef(Region.TRANSPORT, 16, ValueType.UINT16)
        p.write_field(csum_ref, 0)
        segment = p.read_field(
            FieldRef(Region.TRANSPORT, 0, ValueType.DATA, seg_len))
        pseudo = ck.pseudo_header(
            p.read_field(_IP_SRC).to_bytes(4, "big"),
            p.read_field(_IP_DST).to_bytes(4, "big"),
            PROTO_TCP, seg_len)
        p.write_field(csum_ref, ck.checksum(pseudo + segment))
        return p

    handle = _run


class Pad(ActionInstance):
    """Appends n zero bytes to the tail."""

    NAME = "Pad"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "(bytes)"

    def _setup(self, args):
        if len(args) != 1:
            raise ArityMismatch("Pad takes a byte count")
        self.count = int(args[0], 0)

    @_passthrough
    def _run(self, p: Packet):
        return p.pad_tail(bytes(self.count))

    handle = _run


class Unpad(ActionInstance):
    """Trims n bytes from the tail."""

    NAME = "Unpad"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "(bytes)"

    def _setup(self, args):
        if len(args) != 1:
            raise ArityMismatch("Unpad takes a byte count")
        self.count = int(args[0], 0)

    @_passthrough
    def _run(self, p: Packet):
        return p.unpad_tail(self.count)

    handle = _run


class PacketCounter(ActionInstance):
    """Counts traversing packets in a control-plane readable attribute."""

    NAME = "PacketCounter"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "()"

    def _setup(self, args):
        if args:
            raise ArityMismatch("PacketCounter takes no arguments")
        self.declare_attr(AttributeSpec("count", ValueType.UINT32))
        self.set_attribute("count", 0)

    @_passthrough
    def _run(self, p: Packet):
        self.set_attribute("count",
                           (self.get_attribute("count") + 1) & 0xFFFFFFFF)
        return p

    handle = _run


class TCPSyncNotifier(ActionInstance):
    """Raises a tcp_syn event for TCP packets carrying SYN."""

    NAME = "TCPSyncNotifier"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = "()"
    EVENT_NAMES = ("tcp_syn",)

    @_passthrough
    def _run(self, p: Packet):
        if (Region.NETWORK in p.layer_offsets
                and Region.TRANSPORT in p.layer_offsets
                and p.read_field(_IP_PROTO) == PROTO_TCP):
            flags = p.read_field(FieldRef(Region.TRANSPORT, 13, ValueType.UINT8))
            if flags & 0x02:
                payload = (p.read_field(_IP_SRC).to_bytes(4, "big")
                           + p.read_field(_IP_DST).to_bytes(4, "big")
                           + p.read_field(FieldRef(Region.TRANSPORT, 0,
                                                   ValueType.UINT16)).to_bytes(2, "big")
                           + p.read_field(FieldRef(Region.TRANSPORT, 2,
                                                   ValueType.UINT16)).to_bytes(2, "big"))
                self.emit("tcp_syn", payload)
        return p

    handle = _run
