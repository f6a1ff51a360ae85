"""Behavior of every built-in action, driven directly."""

import random
import struct

import pytest

from ofc.actions import default_registry
from ofc.errors import (ArityMismatch, AttributeUnset, DefaultRouteMissing,
                        UnknownAttribute, UnknownClass)
from ofc.packet import Region, new_packet
from reference import build_frame, ipv4_header_ok, rfc1071_checksum

REG = default_registry()
TRANSPORT = 34          # build_frame always emits IHL=5


def make(cls, name, *args):
    return REG.instantiate(cls, name, list(args))


def frame_packet(rng, **kw):
    return new_packet(build_frame(rng, **kw)).mark_layers()


def tcp_port_patched(rng, sport=None, dport=None, flags=None, payload=None):
    buf = bytearray(build_frame(rng, payload=payload))
    if sport is not None:
        buf[TRANSPORT:TRANSPORT + 2] = struct.pack(">H", sport)
    if dport is not None:
        buf[TRANSPORT + 2:TRANSPORT + 4] = struct.pack(">H", dport)
    if flags is not None:
        buf[TRANSPORT + 13] = flags
    return new_packet(bytes(buf)).mark_layers()


# ------------------------------------------------------------ registry


def test_registry_catalog_and_unknown_class():
    cat = REG.catalog()
    assert len(cat) == 28
    assert {"FromDevice", "ToDevice", "Discard"} <= set(cat)
    for info in cat.values():
        assert info["category"] in {"STARTING", "ONE_TO_ONE", "ONE_TO_MANY",
                                    "MANY_TO_ONE", "ENDING"}
    with pytest.raises(UnknownClass):
        REG.instantiate("NoSuchAction", "x", [])


def test_arity_is_validated_at_instantiation():
    with pytest.raises(ArityMismatch):
        make("Pad", "p")                     # needs a byte count
    with pytest.raises(ArityMismatch):
        make("Discard", "d", "extra")
    with pytest.raises(ArityMismatch):
        make("Nat", "n", "not-an-ip")


# ------------------------------------------------------- header editing


def test_dec_ttl_decrements_and_patches_checksum():
    rng = random.Random(0)
    a = make("DecTTL", "ttl")
    for _ in range(20):
        p = frame_packet(rng)
        before = p.payload[22]
        [(port, out)] = a.handle(p)
        assert port == 0
        assert out.payload[22] == before - 1
        assert ipv4_header_ok(out.payload[14:34])


def test_dec_ttl_expiry_drops_and_signals():
    rng = random.Random(1)
    a = make("DecTTL", "ttl")
    buf = bytearray(build_frame(rng))
    buf[22] = 1
    buf[24:26] = b"\x00\x00"
    buf[24:26] = struct.pack(">H", rfc1071_checksum(bytes(buf[14:34])))
    assert a.handle(new_packet(bytes(buf)).mark_layers()) == []
    assert a.dropped == 1
    [event] = a.take_events()
    assert event.name == "ttl_expired"


def test_set_ecn_marks_ce():
    rng = random.Random(2)
    a = make("SetECN", "ecn")
    p = frame_packet(rng)
    [(_, out)] = a.handle(p)
    assert out.payload[15] & 0x03 == 0x03
    assert ipv4_header_ok(out.payload[14:34])


def test_change_src_and_dst_ip():
    rng = random.Random(3)
    src = make("ChangeSrcIP", "s", "IP_SRC")
    dst = make("ChangeDstIP", "d", "IP_DST")
    src.set_attribute("IP_SRC", "172.16.0.9", phase="config")
    dst.set_attribute("IP_DST", 0x0A000001, phase="config")
    p = frame_packet(rng)
    [(_, p)] = src.handle(p)
    [(_, p)] = dst.handle(p)
    assert p.payload[26:30] == bytes([172, 16, 0, 9])
    assert p.payload[30:34] == bytes([10, 0, 0, 1])
    assert ipv4_header_ok(p.payload[14:34])


def test_change_ip_requires_attribute():
    rng = random.Random(4)
    a = make("ChangeSrcIP", "s", "IP_SRC")
    with pytest.raises(AttributeUnset):
        a.handle(frame_packet(rng))


def test_builtin_checksums_match_oracle():
    rng = random.Random(5)
    ipsum = make("SetIPChecksum", "ic")
    tcpsum = make("SetTCPChecksum", "tc")
    for _ in range(20):
        buf = bytearray(build_frame(rng))
        buf[24:26] = b"\xde\xad"             # spoil both checksums
        want_tcp = bytes(buf[TRANSPORT + 16:TRANSPORT + 18])
        buf[TRANSPORT + 16:TRANSPORT + 18] = b"\x00\x00"
        p = new_packet(bytes(buf)).mark_layers()
        [(_, p)] = ipsum.handle(p)
        [(_, p)] = tcpsum.handle(p)
        assert ipv4_header_ok(p.payload[14:34])
        assert p.payload[TRANSPORT + 16:TRANSPORT + 18] == want_tcp


# ------------------------------------------------------- encap / decap


def test_encap_decap_header_round_trip():
    rng = random.Random(6)
    enc = make("EncapHeader", "e", "02:00:00:00:00:01", "020000000002",
               "PROTO_IP")
    dec = make("DecapHeader", "d", "14")
    body = build_frame(rng)
    p = new_packet(body, headroom=32)
    [(_, p)] = enc.handle(p)
    assert p.payload[:6] == bytes.fromhex("020000000001")
    assert p.payload[6:12] == bytes.fromhex("020000000002")
    assert p.payload[12:14] == b"\x08\x00"
    assert p.payload[14:] == body
    [(_, p)] = dec.handle(p)
    assert p.payload == body


def test_encap_header_attribute_macs():
    rng = random.Random(7)
    enc = make("EncapHeader", "e", "MAC_DEST", "MAC_SRC", "PROTO_IP")
    assert set(enc.unset_config_attrs()) == {"MAC_DEST", "MAC_SRC"}
    enc.set_attribute("MAC_DEST", "aa:bb:cc:dd:ee:ff", phase="config")
    enc.set_attribute("MAC_SRC", "00:11:22:33:44:55", phase="config")
    p = new_packet(build_frame(rng), headroom=32)
    [(_, out)] = enc.handle(p)
    assert out.payload[:6] == bytes.fromhex("aabbccddeeff")


def test_pad_unpad():
    pad = make("Pad", "p", "4")
    unpad = make("Unpad", "u", "4")
    p = new_packet(b"abc", tailroom=16)
    [(_, p)] = pad.handle(p)
    assert p.payload == b"abc\x00\x00\x00\x00"
    [(_, p)] = unpad.handle(p)
    assert p.payload == b"abc"


def test_esp_encap_prepends_spi_and_sequence():
    esp = make("ESPEncap", "esp")
    esp.set_attribute("SPI", 0x1001, phase="config")
    esp.set_attribute("RPL", 5, phase="config")
    first = new_packet(b"payload-a", headroom=32)
    second = new_packet(b"payload-b", headroom=32)
    [(_, out1)] = esp.handle(first)
    [(_, out2)] = esp.handle(second)
    assert out1.payload[:4] == (0x1001).to_bytes(4, "big")
    seq1 = int.from_bytes(out1.payload[4:8], "big")
    seq2 = int.from_bytes(out2.payload[4:8], "big")
    assert seq2 == seq1 + 1
    assert out1.payload[8:] == b"payload-a"


def test_ipsec_encap_outer_header():
    rng = random.Random(8)
    a = make("IPsecEncap", "ipe")
    inner = build_frame(rng)[14:]            # bare inner IP packet
    p = new_packet(inner, headroom=64)
    p.mark_layer(Region.NETWORK, 0)
    [(_, out)] = a.handle(p)
    outer = out.payload[:20]
    assert outer[0] == 0x45
    assert outer[9] == 50                    # ESP
    assert struct.unpack(">H", outer[2:4])[0] == len(out.payload)
    assert outer[10:12] == b"\x00\x00"     # left for SetIPChecksum
    assert out.payload[20:] == inner
    assert out.layer_offsets[Region.NETWORK] == 0
    [(_, fixed)] = make("SetIPChecksum", "csum").handle(out)
    assert ipv4_header_ok(fixed.payload[:20])


# ------------------------------------------------------------- ciphers


FIPS_KEY = "000102030405060708090a0b0c0d0e0f"


def test_aes_ecb_fips_vector():
    enc = make("Aes", "enc", "EBC")
    enc.set_attribute("key", FIPS_KEY, phase="config")
    p = new_packet(bytes.fromhex("00112233445566778899aabbccddeeff"))
    [(_, out)] = enc.handle(p)
    assert out.payload.hex() == "69c4e0d86a7b0430d8cdb78070b4c55a"


def test_aes_round_trip_full_blocks():
    enc = make("Aes", "enc", "EBC")
    dec = make("Aes", "dec", "EBC", "decrypt")
    for a in (enc, dec):
        a.set_attribute("key", FIPS_KEY, phase="config")
    rng = random.Random(9)
    for size in (1, 15, 16, 17, 47, 256):
        body = bytes(rng.randrange(256) for _ in range(size))
        p = new_packet(body, tailroom=32)
        [(_, ct)] = enc.handle(p)
        full = (size // 16) * 16
        assert len(ct.payload) == size
        assert ct.payload[full:] == body[full:]   # partial tail untouched
        if full:
            assert ct.payload[:full] != body[:full]
        [(_, back)] = dec.handle(new_packet(ct.payload, tailroom=32))
        assert back.payload == body


def test_cipher_requires_key():
    enc = make("Aes", "enc", "EBC")
    with pytest.raises(AttributeUnset):
        enc.handle(new_packet(bytes(16)))


def test_cipher_xor_is_involutive():
    a = make("Cipher", "cx", "xor")
    a.set_attribute("key", FIPS_KEY, phase="config")
    body = bytes(range(32))
    [(_, ct)] = a.handle(new_packet(body, tailroom=32))
    assert ct.payload != body
    b = make("Cipher", "cx2", "xor", "decrypt")
    b.set_attribute("key", FIPS_KEY, phase="config")
    [(_, back)] = b.handle(new_packet(ct.payload, tailroom=32))
    assert back.payload == body


# ---------------------------------------------------------- classifiers


def test_exact_match_offsets_and_symbols():
    rng = random.Random(10)
    em = make("ExactMatch", "em", "12/0800", "-")
    ipv4 = build_frame(rng)
    arp = bytearray(ipv4)
    arp[12:14] = b"\x08\x06"
    assert em.handle(new_packet(ipv4).mark_layers())[0][0] == 0
    assert em.handle(new_packet(bytes(arp)).mark_layers())[0][0] == 1
    sym = make("ExactMatch", "sym", "PROTO_IP", "-")
    assert sym.handle(new_packet(ipv4).mark_layers())[0][0] == 0
    assert sym.handle(new_packet(bytes(arp)).mark_layers())[0][0] == 1


def test_first_match_acl():
    rng = random.Random(11)
    fm = make("FirstMatch", "fm", "tcp/*/*/*/443", "any")
    assert fm.handle(tcp_port_patched(rng, dport=443))[0][0] == 0
    assert fm.handle(tcp_port_patched(rng, dport=80))[0][0] == 1


def test_lpm_match_longest_prefix_wins():
    rng = random.Random(12)
    lpm = make("LpmMatch", "lpm", "10.0.0.0/8", "10.1.0.0/16", "0.0.0.0/0")
    def route(ip):
        buf = bytearray(build_frame(rng))
        buf[30:34] = bytes(ip)
        return lpm.handle(new_packet(bytes(buf)).mark_layers())[0][0]
    assert route([10, 1, 2, 3]) == 1
    assert route([10, 9, 2, 3]) == 0
    assert route([8, 8, 8, 8]) == 2


def test_lpm_match_requires_cover():
    rng = random.Random(13)
    lpm = make("LpmMatch", "lpm", "10.0.0.0/8", "10.2.0.0/16")
    buf = bytearray(build_frame(rng))
    buf[30:34] = bytes([8, 8, 8, 8])
    with pytest.raises(DefaultRouteMissing):
        lpm.handle(new_packet(bytes(buf)).mark_layers())


def test_pattern_match_reports_earliest_hit():
    rng = random.Random(14)
    pm = make("PatternMatch", "pm", "attack", "tack")
    hit = frame_packet(rng, payload=b"an attack came")
    [(port, _)] = pm.handle(hit)
    assert port == 0
    [event] = pm.take_events()
    rule = int.from_bytes(event.payload[:2], "big")
    offset = int.from_bytes(event.payload[2:], "big")
    assert (rule, offset) == (0, 3)
    miss = frame_packet(rng, payload=b"calm seas")
    assert pm.handle(miss)[0][0] == 1


# ------------------------------------------------------------- stateful


def test_stateful_firewall_tracks_connections():
    rng = random.Random(15)
    fw = make("StatefulFirewall", "fw")
    syn = tcp_port_patched(rng, sport=5000, dport=80, flags=0x02)
    src, dst = syn.payload[26:30], syn.payload[30:34]
    assert fw.handle(syn)[0][0] == 0
    # Reply on the reverse tuple passes.
    reply = bytearray(build_frame(rng))
    reply[26:30], reply[30:34] = dst, src
    reply[TRANSPORT:TRANSPORT + 2] = struct.pack(">H", 80)
    reply[TRANSPORT + 2:TRANSPORT + 4] = struct.pack(">H", 5000)
    reply[TRANSPORT + 13] = 0x12
    assert fw.handle(new_packet(bytes(reply)).mark_layers())[0][0] == 0
    # A connection nobody opened lands on the block port.
    stranger = tcp_port_patched(rng, sport=777, dport=888, flags=0x10)
    assert fw.handle(stranger)[0][0] == 1


def test_ftp_ips_blocks_pre_auth_transfers():
    rng = random.Random(16)
    ips = make("FtpIps", "ips")
    retr = tcp_port_patched(rng, sport=4000, dport=21, flags=0x18,
                            payload=b"RETR secret\r\n")
    [(port, _)] = ips.handle(retr)
    assert port == 1
    [event] = ips.take_events()
    assert event.name == "alert" and event.payload == b"RETR"
    # USER + PASS then RETR passes.
    for line in (b"USER alice\r\n", b"PASS hunter2\r\n", b"RETR ok\r\n"):
        pkt = tcp_port_patched(rng, sport=4000, dport=21, flags=0x18,
                               payload=line)
        [(port, _)] = ips.handle(pkt)
    assert port == 0
    assert ips.take_events() == []


def test_tcp_syn_notifier():
    rng = random.Random(17)
    a = make("TCPSyncNotifier", "syn")
    plain = tcp_port_patched(rng, flags=0x10)
    assert a.handle(plain)[0][0] == 0 and a.take_events() == []
    syn = tcp_port_patched(rng, flags=0x02)
    assert a.handle(syn)[0][0] == 0
    [event] = a.take_events()
    assert event.name == "tcp_syn"


def test_nat_control_plane_handshake():
    rng = random.Random(18)
    nat = make("Nat", "nat", "100.64.0.1")
    p = tcp_port_patched(rng, sport=3333, dport=80)
    assert nat.handle(p) == []               # held for the control plane
    assert nat.held == 1
    [event] = nat.take_events()
    assert event.name == "new_flow" and len(event.payload) == 13
    nat.set_attribute("add_mapping", event.payload[:7]
                      + struct.pack(">H", 7777))
    [(port, out)] = nat.take_pending()
    assert port == 0
    assert out.payload[26:30] == bytes([100, 64, 0, 1])
    assert struct.unpack(">H", out.payload[TRANSPORT:TRANSPORT + 2])[0] == 7777
    assert ipv4_header_ok(out.payload[14:34])
    assert nat.get_attribute("mappings") == 1
    # Follow-up packets of the mapped flow translate inline.
    q = tcp_port_patched(rng, sport=3333, dport=80)
    q.payload and q  # same 5-tuple except random ip: rebuild from p
    q = new_packet(p.payload).mark_layers()
    [(_, out2)] = nat.handle(q)
    assert struct.unpack(">H", out2.payload[TRANSPORT:TRANSPORT + 2])[0] == 7777


def test_packet_counter_attribute():
    rng = random.Random(19)
    pc = make("PacketCounter", "pc")
    assert pc.get_attribute("count") == 0
    for k in range(5):
        pc.handle(frame_packet(rng))
    assert pc.get_attribute("count") == 5
    pc.set_attribute("count", 0)             # runtime reset is allowed
    assert pc.get_attribute("count") == 0


def test_unknown_attribute_rejected():
    pc = make("PacketCounter", "pc")
    with pytest.raises(UnknownAttribute):
        pc.set_attribute("nope", 1, phase="config")
    with pytest.raises(UnknownAttribute):
        pc.get_attribute("nope")


# ----------------------------------------------------------- schedulers


def test_wrr_schedule_order():
    wrr = make("Wrr", "w", "2", "1")
    for k in range(3):
        wrr.enqueue(0, new_packet(bytes([0, k])))
        wrr.enqueue(1, new_packet(bytes([1, k])))
    order = []
    while (p := wrr.pull()) is not None:
        order.append(tuple(p.payload))
    assert order == [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (1, 2)]


def test_sp_schedule_strict_priority():
    sp = make("Sp", "s", "2")
    sp.enqueue(1, new_packet(b"\x01"))
    sp.enqueue(0, new_packet(b"\x00"))
    assert sp.pull().payload == b"\x00"
    assert sp.pull().payload == b"\x01"
    assert sp.pull() is None


# -------------------------------------------------- accounting property


def test_every_push_action_accounts_packets():
    """in == out + dropped + held for a straight-through run."""
    rng = random.Random(20)
    cases = [
        ("DecTTL", []), ("SetECN", []), ("SetIPChecksum", []),
        ("SetTCPChecksum", []), ("PacketCounter", []),
        ("Pad", ["2"]), ("Unpad", ["2"]),
        ("PatternMatch", ["xyz"]), ("TCPSyncNotifier", []),
        ("StatefulFirewall", []), ("FtpIps", []),
        ("ExactMatch", ["12/0800", "-"]),
        ("LpmMatch", ["0.0.0.0/0", "10.0.0.0/8"]),
        ("FirstMatch", ["any"]),
    ]
    for cls, args in cases:
        action = make(cls, cls.lower(), *args)
        sent = 0
        for _ in range(10):
            p = frame_packet(rng)
            action.handle(p)
            sent += 1
        got = action.packets_out + action.dropped + action.held
        assert action.packets_in == sent, cls
        assert got == sent, cls
