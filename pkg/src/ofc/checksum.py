"""Internet checksum (ones-complement) helpers.

The fold-and-complement form here is shared by the native checksum
actions and by NAT's incremental rewrites. Tests check it against an
independently written reference.
"""

from __future__ import annotations


def ones_complement_sum(data: bytes, start: int = 0) -> int:
    """16-bit ones-complement sum of big-endian words, carries folded in."""
    total = start
    n = len(data)
    # pad an odd trailing byte with zero on the right
    for i in range(0, n - 1, 2):
        total += (data[i] << 8) | data[i + 1]
    if n % 2:
        total += data[-1] << 8
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def checksum(data: bytes) -> int:
    """Complement of the folded sum; the value stored in headers."""
    return ~ones_complement_sum(data) & 0xFFFF


def verify(data: bytes) -> bool:
    """True when data (checksum field included) sums to all-ones."""
    return ones_complement_sum(data) == 0xFFFF


def incremental_update(old_checksum: int, old_word: int, new_word: int) -> int:
    """RFC 1624 eqn 3 update of a stored checksum after one word changed."""
    total = (~old_checksum & 0xFFFF) + (~old_word & 0xFFFF) + new_word
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def ipv4_header_checksum(header: bytes) -> int:
    """Checksum for an IPv4 header with its checksum field zeroed out."""
    zeroed = header[:10] + b"\x00\x00" + header[12:]
    return checksum(zeroed)


def pseudo_header(src: bytes, dst: bytes, proto: int, length: int) -> bytes:
    """IPv4 pseudo-header used by TCP/UDP checksums."""
    return src + dst + bytes([0, proto]) + length.to_bytes(2, "big")
