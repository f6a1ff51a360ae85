"""Packet buffer semantics: views, fields, encap/decap, layer marks."""

import random

import pytest
from hypothesis import given, strategies as st

from ofc.errors import (InsufficientHeadroom, InsufficientTailroom,
                        OutOfBounds, PropertyWriteForbidden, TypeMismatch,
                        Underflow, UnknownName, UnmarkedRegion)
from ofc.packet import (FieldRef, Region, ValueType, new_packet)
from reference import build_frame


def test_views_and_rooms():
    p = new_packet(b"abcdef", headroom=10, tailroom=4)
    assert p.payload == b"abcdef"
    assert len(p) == 6
    assert p.headroom == 10
    assert p.tailroom == 4


def test_hex_string_construction():
    assert new_packet("dead beef".replace(" ", "")).payload == b"\xde\xad\xbe\xef"


def test_properties_are_read_only():
    p = new_packet(b"xy", ingress_port=3, timestamp=9)
    assert p.read_prop("pkt_len") == 2
    assert p.read_prop("ingress_port") == 3
    assert p.read_prop("timestamp") == 9
    with pytest.raises(UnknownName):
        p.read_prop("nope")
    for name in p.properties:
        with pytest.raises(PropertyWriteForbidden):
            p.write_prop(name, 1)


def test_field_read_write_big_endian():
    p = new_packet(bytes(range(16)))
    ref = FieldRef(Region.PACKET, 2, ValueType.UINT16)
    assert p.read_field(ref) == 0x0203
    p.write_field(ref, 0xBEEF)
    assert p.payload[2:4] == b"\xbe\xef"
    wide = FieldRef(Region.PACKET, 4, ValueType.UINT32)
    p.write_field(wide, 0x11223344)
    assert p.read_field(wide) == 0x11223344


def test_field_width_masking():
    p = new_packet(bytes(4))
    ref = FieldRef(Region.PACKET, 0, ValueType.UINT8)
    p.write_field(ref, 0x1FF)          # masked to the declared width
    assert p.read_field(ref) == 0xFF


def test_data_field_round_trip_and_type_errors():
    p = new_packet(bytes(8))
    ref = FieldRef(Region.PACKET, 1, ValueType.DATA, length=3)
    p.write_field(ref, b"\x01\x02\x03")
    assert p.read_field(ref) == b"\x01\x02\x03"
    with pytest.raises(TypeMismatch):
        p.write_field(ref, b"\x01")     # wrong length
    with pytest.raises(TypeMismatch):
        p.write_field(ref, 5)           # wrong type
    with pytest.raises(TypeMismatch):
        p.write_field(FieldRef(Region.PACKET, 0, ValueType.UINT8), b"x")


def test_out_of_bounds_and_unmarked_region():
    p = new_packet(bytes(4))
    with pytest.raises(OutOfBounds):
        p.read_field(FieldRef(Region.PACKET, 3, ValueType.UINT16))
    with pytest.raises(UnmarkedRegion):
        p.read_field(FieldRef(Region.NETWORK, 0, ValueType.UINT8))


def test_encap_decap_head_shifts_layers():
    p = new_packet(b"payload", headroom=8)
    p.mark_layer(Region.NETWORK, 0)
    p.encap_head(b"HH")
    assert p.payload == b"HHpayload"
    assert p.layer_offsets[Region.NETWORK] == 2
    p.decap_head(2)
    assert p.payload == b"payload"
    assert p.layer_offsets[Region.NETWORK] == 0


def test_decap_drops_stranded_layer_offsets():
    p = new_packet(b"abcdef")
    p.mark_layer(Region.TRANSPORT, 4)
    p.decap_head(5)                      # offset 4 - 5 < 0: dropped
    assert Region.TRANSPORT not in p.layer_offsets


def test_room_exhaustion_and_underflow():
    p = new_packet(b"ab", headroom=1, tailroom=1)
    with pytest.raises(InsufficientHeadroom):
        p.encap_head(b"xy")
    with pytest.raises(InsufficientTailroom):
        p.pad_tail(b"xy")
    with pytest.raises(Underflow):
        p.decap_head(3)
    with pytest.raises(Underflow):
        p.unpad_tail(3)


def test_pad_unpad_tail():
    p = new_packet(b"ab", tailroom=8)
    p.pad_tail(b"cd")
    assert p.payload == b"abcd"
    p.unpad_tail(3)
    assert p.payload == b"a"


def test_clone_is_independent():
    p = new_packet(b"abcd", headroom=4)
    p.mark_layer(Region.NETWORK, 1)
    p.write_meta("m", ValueType.UINT16, 7)
    q = p.clone()
    q.write_field(FieldRef(Region.PACKET, 0, ValueType.UINT8), 0xFF)
    q.encap_head(b"Z")
    q.write_meta("m", ValueType.UINT16, 8)
    assert p.payload == b"abcd"
    assert p.layer_offsets[Region.NETWORK] == 1
    assert p.read_meta("m") == 7
    assert q.read_meta("m") == 8


def test_metadata_round_trip():
    p = new_packet(b"x")
    p.write_meta("count", ValueType.UINT32, 41)
    assert p.read_meta("count") == 41
    p.write_meta("blob", ValueType.DATA, b"\x00\x01")
    assert p.read_meta("blob") == b"\x00\x01"
    with pytest.raises(UnknownName):
        p.read_meta("absent")


def test_mark_layers_on_real_frame():
    rng = random.Random(5)
    for _ in range(20):
        frame = build_frame(rng)
        p = new_packet(frame).mark_layers()
        assert p.layer_offsets[Region.LINK] == 0
        assert p.layer_offsets[Region.NETWORK] == 14
        ihl = (frame[14] & 0x0F) * 4
        assert p.layer_offsets[Region.TRANSPORT] == 14 + ihl
        # Reading through the marks agrees with raw offsets.
        proto = p.read_field(FieldRef(Region.NETWORK, 9, ValueType.UINT8))
        assert proto == frame[23]


def test_mark_layers_non_ip_stops_at_link():
    p = new_packet(b"\xff" * 20).mark_layers()
    assert Region.LINK in p.layer_offsets
    assert Region.NETWORK not in p.layer_offsets


@given(st.binary(min_size=1, max_size=200), st.integers(0, 64),
       st.integers(0, 64))
def test_payload_survives_room_churn(data, extra_head, extra_tail):
    p = new_packet(data, headroom=extra_head + 8, tailroom=extra_tail + 8)
    p.encap_head(b"\xaa" * extra_head)
    p.pad_tail(b"\xbb" * extra_tail)
    p.decap_head(extra_head)
    p.unpad_tail(extra_tail)
    assert p.payload == data
