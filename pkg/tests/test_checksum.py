"""Internet checksum against an independently written oracle."""

import random
import struct

from hypothesis import assume, given, strategies as st

from ofc.checksum import (checksum, incremental_update, ipv4_header_checksum,
                          ones_complement_sum, pseudo_header, verify)
from reference import build_ipv4_header, ipv4_header_ok, rfc1071_checksum


@given(st.binary(min_size=0, max_size=512))
def test_matches_oracle(data):
    assert checksum(data) == rfc1071_checksum(data)


@given(st.binary(min_size=1, max_size=256))
def test_stored_checksum_verifies(data):
    # Writing the computed checksum into any 16-bit-aligned slot makes
    # the whole buffer verify.
    buf = bytearray(data)
    if len(buf) % 2:
        buf.append(0)
    buf[0:2] = b"\x00\x00"
    buf[0:2] = struct.pack(">H", checksum(bytes(buf)))
    assert verify(bytes(buf))
    assert ipv4_header_ok(bytes(buf))


def test_known_vector():
    # Worked example widely used for RFC 1071: a 20-byte IPv4 header.
    header = bytes.fromhex(
        "4500003c1c4640004006" + "0000" + "ac100a63ac100a0c")
    assert checksum(header) == 0xB1E6


def test_ipv4_header_checksum_ignores_stored_value():
    rng = random.Random(7)
    for _ in range(50):
        hdr = bytearray(build_ipv4_header(rng))
        want = checksum(bytes(hdr))
        hdr[10:12] = struct.pack(">H", 0xDEAD)  # garbage stored value
        assert ipv4_header_checksum(bytes(hdr)) == want


@given(st.binary(min_size=4, max_size=64).filter(lambda b: len(b) % 2 == 0),
       st.integers(min_value=0, max_value=0xFFFF))
def test_incremental_update_matches_recompute(data, new_word):
    buf = bytearray(data)
    old = checksum(bytes(buf))
    old_word = struct.unpack(">H", buf[2:4])[0]
    buf[2:4] = struct.pack(">H", new_word)
    # An all-zero buffer is the one's-complement ±0 corner (stored
    # 0xFFFF vs locally updated 0x0000); it cannot occur in a protocol
    # header, whose version byte is nonzero.
    assume(any(buf))
    assert incremental_update(old, old_word, new_word) == checksum(bytes(buf))


def test_incremental_update_on_headers_always_verifies():
    rng = random.Random(21)
    for _ in range(200):
        hdr = bytearray(build_ipv4_header(rng, zero_checksum=False))
        old = struct.unpack(">H", hdr[10:12])[0]
        # Rewrite one non-checksum 16-bit word, fix the stored value
        # incrementally, and demand the oracle still verifies it.
        slot = rng.choice([k for k in range(0, len(hdr), 2) if k != 10])
        old_word = struct.unpack(">H", hdr[slot:slot + 2])[0]
        new_word = rng.randrange(1 << 16)
        hdr[slot:slot + 2] = struct.pack(">H", new_word)
        hdr[10:12] = struct.pack(
            ">H", incremental_update(old, old_word, new_word))
        assert ipv4_header_ok(bytes(hdr))


@given(st.binary(min_size=0, max_size=128))
def test_ones_complement_sum_is_complement_of_checksum(data):
    assert ones_complement_sum(data) == (~checksum(data)) & 0xFFFF


def test_pseudo_header_layout():
    ph = pseudo_header(b"\x0a\x00\x00\x01", b"\x0a\x00\x00\x02", 6, 20)
    assert ph == b"\x0a\x00\x00\x01\x0a\x00\x00\x02\x00\x06\x00\x14"
