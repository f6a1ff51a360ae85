"""Packet-program language: parser, checker, interpreter, bundled programs."""

import random
import struct

import pytest

from ofc.errors import (IllegalPacketObjectUse, LoopBudgetExceeded,
                        ParseError, PropertyWriteForbidden,
                        UndeclaredName, ValidationError)
from ofc.packet import Region, new_packet
from ofc.pseudo import (bundled_names, check_program, interpret,
                        load_bundled, parse_program)
from reference import build_frame, build_ipv4_header, ipv4_header_ok, \
    rfc1071_checksum


def compile_program(src: str, name: str = "t"):
    return check_program(parse_program(src, name=name))


def ip_packet(header: bytes):
    p = new_packet(header)
    p.mark_layer(Region.NETWORK, 0)
    return p


# ----------------------------------------------------------- language


def test_full_surface_round_trip():
    prog = compile_program("""
@ FIELD first NETWORK 0 UINT8
@ ATTR knob UINT16
@ META note UINT32
@ PROP pkt_len

unsigned int x = 0;
unsigned int plen = 0;
@ LOAD first x
x = x + 1;
@ STORE first x
@ LOAD knob x
@ LOAD pkt_len plen
x = x + plen;
@ STORE note x
@ EVENT saw x
@ STORE knob 7
""")
    p = ip_packet(bytes([9, 0, 0, 0]))
    res = interpret(prog, p, {"knob": 100})
    assert p.payload == bytes([10, 0, 0, 0])
    assert p.read_meta("note") == 104          # attr 100 + pkt_len 4
    assert res.attr_updates == {"knob": 7}
    assert [(n, bytes(b)) for n, b in res.events] == [
        ("saw", (104).to_bytes(4, "big"))]


def test_arithmetic_is_32_bit_modular():
    prog = compile_program("""
@ META out UINT32
unsigned int x = 0xffffffff;
x = x + 2;
@ STORE out x
""")
    p = new_packet(b"\x00")
    interpret(prog, p)
    assert p.read_meta("out") == 1


def test_control_flow_if_else_while():
    prog = compile_program("""
@ META out UINT32
unsigned int n = 10;
unsigned int acc = 0;
while (n != 0) {
    if ((n & 1) == 1) {
        acc = acc + n;
    } else {
        acc = acc + 1;
    }
    n = n - 1;
}
@ STORE out acc
""")
    p = new_packet(b"\x00")
    interpret(prog, p)
    assert p.read_meta("out") == sum(k if k % 2 else 1 for k in range(1, 11))


def test_indexed_data_load_store():
    prog = compile_program("""
@ FIELD body NETWORK 0 DATA
unsigned short w = 0;
@ LOAD body w 2 UINT16
w = w + 1;
@ STORE body w 2 UINT16
""")
    p = ip_packet(bytes([0, 0, 0x12, 0x34, 0, 0]))
    interpret(prog, p)
    assert p.payload[2:4] == b"\x12\x35"


def test_parse_errors_have_positions():
    with pytest.raises(ParseError) as err:
        parse_program("@ FIELD broken\n", name="t")
    assert err.value.line == 1
    with pytest.raises(ParseError):
        parse_program("unsigned int x = ;\n", name="t")
    with pytest.raises(ParseError):
        parse_program("@ FIELD f NOWHERE 0 UINT8\n", name="t")


def test_packet_objects_cannot_appear_in_expressions():
    with pytest.raises(IllegalPacketObjectUse):
        parse_program("""
@ FIELD f NETWORK 0 UINT8
unsigned int x = 0;
x = f + 1;
""", name="t")


def test_checker_rejects_undeclared_and_property_writes():
    with pytest.raises(UndeclaredName):
        compile_program("@ LOAD nothing x\nunsigned int x = 0;\n")
    with pytest.raises(PropertyWriteForbidden) as err:
        compile_program("""
@ PROP pkt_len
unsigned int x = 1;
@ STORE pkt_len x
""")
    assert "read-only" in str(err.value)


def test_interpreter_never_writes_properties():
    # Even a handcrafted store AST cannot reach a property write: the
    # interpreter raises before touching the packet.
    prog = parse_program("""
@ PROP pkt_len
unsigned int x = 1;
@ STORE pkt_len x
""", name="t")
    p = new_packet(b"abc")
    from ofc.pseudo.check import CheckedProgram
    unchecked = CheckedProgram(prog, {"x": 32})
    with pytest.raises((PropertyWriteForbidden, ValidationError)):
        interpret(unchecked, p)


def test_loop_budget_guards_infinite_loops():
    prog = compile_program("""
unsigned int x = 1;
while (x != 0) {
    x = 1;
}
""")
    with pytest.raises(LoopBudgetExceeded):
        interpret(prog, new_packet(b"\x00"), loop_budget=10_000)


# ---------------------------------------------------- bundled programs


def test_bundled_names():
    assert bundled_names() == ["set_ip_checksum", "set_tcp_checksum"]


def test_set_ip_checksum_matches_oracle_sample():
    prog = load_bundled("set_ip_checksum")
    rng = random.Random(3)
    for _ in range(50):
        header = build_ipv4_header(rng)     # checksum field zeroed
        p = ip_packet(header)
        interpret(prog, p)
        out = p.payload
        stored = struct.unpack(">H", out[10:12])[0]
        expect = bytearray(header)
        expect[10:12] = b"\x00\x00"
        assert stored == rfc1071_checksum(bytes(expect))
        assert ipv4_header_ok(out)


def test_set_ip_checksum_overwrites_stale_value():
    prog = load_bundled("set_ip_checksum")
    rng = random.Random(4)
    header = bytearray(build_ipv4_header(rng))
    header[10:12] = b"\xde\xad"
    p = ip_packet(bytes(header))
    interpret(prog, p)
    assert ipv4_header_ok(p.payload)


def test_set_tcp_checksum_round_trip():
    prog = load_bundled("set_tcp_checksum")
    rng = random.Random(5)
    for _ in range(20):
        frame = bytearray(build_frame(rng))
        ihl = (frame[14] & 0x0F) * 4
        toff = 14 + ihl
        want = bytes(frame[toff + 16:toff + 18])
        frame[toff + 16:toff + 18] = b"\x00\x00"
        p = new_packet(bytes(frame)).mark_layers()
        interpret(prog, p)
        assert p.payload[toff + 16:toff + 18] == want
