"""Independent reference implementations used only by the tests.

Deliberately written in a different style from the package code (no
shared helpers, no vectorization) so agreement is evidence, not
tautology.
"""

from __future__ import annotations

import itertools
import struct

import numpy as np

FEAS_TOL = 1e-7


# ------------------------------------------------------------ checksum


def rfc1071_checksum(data: bytes) -> int:
    """One's-complement 16-bit checksum, end-around carry each step."""
    if len(data) % 2:
        data = data + b"\x00"
    total = 0
    for k in range(0, len(data), 2):
        total += (data[k] << 8) | data[k + 1]
        while total > 0xFFFF:
            total = (total & 0xFFFF) + (total >> 16)
    return (~total) & 0xFFFF


def ipv4_header_ok(header: bytes) -> bool:
    """Does the stored IPv4 header checksum verify?"""
    if len(header) % 2:
        header = header + b"\x00"
    total = 0
    for k in range(0, len(header), 2):
        total += (header[k] << 8) | header[k + 1]
        while total > 0xFFFF:
            total = (total & 0xFFFF) + (total >> 16)
    return total == 0xFFFF


# ------------------------------------------------------- frame builder


def build_ipv4_header(rng, ihl: int | None = None,
                      zero_checksum: bool = True) -> bytes:
    """Random IPv4 header, IHL in [5, 15], options filled randomly."""
    if ihl is None:
        ihl = rng.randint(5, 15)
    header = bytearray(ihl * 4)
    header[0] = (4 << 4) | ihl
    header[1] = rng.randrange(256)
    total_len = ihl * 4 + rng.randrange(1400)
    header[2:4] = struct.pack(">H", total_len)
    header[4:6] = struct.pack(">H", rng.randrange(1 << 16))
    header[6:8] = struct.pack(">H", rng.randrange(1 << 13))
    header[8] = rng.randrange(1, 256)
    header[9] = rng.choice([1, 6, 17, 47, 50])
    header[10:12] = b"\x00\x00"
    for k in range(12, ihl * 4):
        header[k] = rng.randrange(256)
    if not zero_checksum:
        csum = rfc1071_checksum(bytes(header))
        header[10:12] = struct.pack(">H", csum)
    return bytes(header)


def build_frame(rng, payload: bytes | None = None) -> bytes:
    """Ethernet + valid IPv4 + TCP frame with correct checksums."""
    if payload is None:
        payload = bytes(rng.randrange(256)
                        for _ in range(rng.randrange(0, 64)))
    src = bytes(rng.randrange(1, 255) for _ in range(4))
    dst = bytes(rng.randrange(1, 255) for _ in range(4))
    tcp = bytearray(20 + len(payload))
    tcp[0:2] = struct.pack(">H", rng.randrange(1024, 1 << 16))
    tcp[2:4] = struct.pack(">H", rng.randrange(1, 1 << 16))
    tcp[4:8] = struct.pack(">I", rng.randrange(1 << 32))
    tcp[8:12] = struct.pack(">I", rng.randrange(1 << 32))
    tcp[12] = 5 << 4
    tcp[13] = 0x18
    tcp[14:16] = struct.pack(">H", 65535)
    tcp[20:] = payload
    pseudo = src + dst + bytes([0, 6]) + struct.pack(">H", len(tcp))
    tsum = rfc1071_checksum(pseudo + bytes(tcp))
    tcp[16:18] = struct.pack(">H", tsum)

    ip = bytearray(20)
    ip[0] = 0x45
    ip[2:4] = struct.pack(">H", 20 + len(tcp))
    ip[4:6] = struct.pack(">H", rng.randrange(1 << 16))
    ip[8] = 64
    ip[9] = 6
    ip[12:16] = src
    ip[16:20] = dst
    ip[10:12] = struct.pack(">H", rfc1071_checksum(bytes(ip)))

    eth = (bytes(rng.randrange(256) for _ in range(6))
           + bytes(rng.randrange(256) for _ in range(6))
           + b"\x08\x00")
    return eth + bytes(ip) + bytes(tcp)


# ------------------------------------------------- linear programming


def vertex_minimize(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None):
    """Exact optimum of a tiny LP by basic-solution enumeration.

    Minimizes ``c @ x`` over ``A_ub x <= b_ub``, ``A_eq x = b_eq``,
    ``x >= 0``.  Returns the optimal value, or None when no feasible
    basic solution exists.  Only valid for bounded feasible regions
    (with ``x >= 0`` any nonempty region is pointed, so the optimum of
    a bounded problem sits at some vertex).
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    rows = []
    rhs = []
    kinds = []
    if A_ub is not None and len(A_ub):
        for row, b in zip(np.asarray(A_ub, dtype=float), np.ravel(b_ub)):
            rows.append(row)
            rhs.append(float(b))
            kinds.append("ub")
    n_eq = 0
    if A_eq is not None and len(A_eq):
        for row, b in zip(np.asarray(A_eq, dtype=float), np.ravel(b_eq)):
            rows.append(row)
            rhs.append(float(b))
            kinds.append("eq")
            n_eq += 1
    for j in range(n):
        row = np.zeros(n)
        row[j] = 1.0
        rows.append(row)
        rhs.append(0.0)
        kinds.append("nn")
    eq_idx = [k for k, kind in enumerate(kinds) if kind == "eq"]
    free_idx = [k for k, kind in enumerate(kinds) if kind != "eq"]
    best = None
    need = n - len(eq_idx)
    if need < 0:
        # More equalities than variables: solve them alone and check.
        # (The tiny-LP generator never produces this; guard only.)
        x = _lstsq_point(rows, rhs, kinds, n)
        if x is not None and _is_feasible(x, rows, rhs, kinds):
            return float(c @ x)
        return None
    for combo in itertools.combinations(free_idx, need):
        active = eq_idx + list(combo)
        A = np.array([rows[k] for k in active])
        b = np.array([rhs[k] for k in active])
        if np.linalg.matrix_rank(A) < n:
            continue
        try:
            x = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            continue
        if _is_feasible(x, rows, rhs, kinds):
            value = float(c @ x)
            if best is None or value < best:
                best = value
    return best


def _is_feasible(x, rows, rhs, kinds) -> bool:
    for row, b, kind in zip(rows, rhs, kinds):
        v = float(np.dot(row, x))
        if kind == "ub" and v > b + FEAS_TOL:
            return False
        if kind == "eq" and abs(v - b) > FEAS_TOL:
            return False
        if kind == "nn" and v < b - FEAS_TOL:
            return False
    return True


def _lstsq_point(rows, rhs, kinds, n):
    eq_rows = [r for r, kind in zip(rows, kinds) if kind == "eq"]
    eq_rhs = [b for b, kind in zip(rhs, kinds) if kind == "eq"]
    if not eq_rows:
        return None
    x, *_ = np.linalg.lstsq(np.array(eq_rows), np.array(eq_rhs), rcond=None)
    return x
