"""Interpreter for checked packet programs.

All arithmetic is 32-bit unsigned modular; assignment truncates to the
declared local width. Loops share one budget per invocation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import (
    AttributeUnset,
    LoopBudgetExceeded,
    OutOfBounds,
    PropertyWriteForbidden,
    UndeclaredName,
)
from ..packet import FieldRef, Packet, ValueType
from .check import CheckedProgram
from .nodes import (
    AssignStmt,
    AttrDecl,
    Binary,
    Cond,
    DeclStmt,
    EventStmt,
    FieldDecl,
    IfStmt,
    LoadStmt,
    MetaDecl,
    Num,
    PropDecl,
    StoreStmt,
    Unary,
    Var,
    WhileStmt,
)

_MASK32 = 0xFFFFFFFF
DEFAULT_LOOP_BUDGET = 1_000_000


@dataclass
class InterpResult:
    attr_updates: dict[str, int | bytes] = field(default_factory=dict)
    events: list[tuple[str, bytes]] = field(default_factory=list)


class _Machine:
    def __init__(self, checked: CheckedProgram, packet: Packet,
                 attrs: dict | None, loop_budget: int):
        self.decls = checked.program.decls
        self.widths = checked.locals
        self.packet = packet
        self.attrs = attrs or {}
        self.updates: dict[str, int | bytes] = {}
        self.events: list[tuple[str, bytes]] = []
        self.env: dict[str, int] = {}
        self.budget = loop_budget

    # ------------------------------------------------------ expressions

    def eval(self, expr) -> int:
        if isinstance(expr, Num):
            return expr.value & _MASK32
        if isinstance(expr, Var):
            try:
                return self.env[expr.name]
            except KeyError:
                raise UndeclaredName(expr.name) from None
        if isinstance(expr, Unary):
            value = self.eval(expr.operand)
            if expr.op == "~":
                return ~value & _MASK32
            return -value & _MASK32
        if isinstance(expr, Binary):
            left = self.eval(expr.left)
            right = self.eval(expr.right)
            op = expr.op
            if op == "+":
                return (left + right) & _MASK32
            if op == "-":
                return (left - right) & _MASK32
            if op == "*":
                return (left * right) & _MASK32
            if op == "&":
                return left & right
            if op == "|":
                return left | right
            if op == "^":
                return left ^ right
            if op == "<<":
                return 0 if right >= 32 else (left << right) & _MASK32
            if op == ">>":
                return 0 if right >= 32 else left >> right
        raise TypeError(f"bad expression {expr!r}")

    def test(self, cond: Cond) -> bool:
        left, right = self.eval(cond.left), self.eval(cond.right)
        op = cond.op
        if op == "<":
            return left < right
        if op == "<=":
            return left <= right
        if op == ">":
            return left > right
        if op == ">=":
            return left >= right
        if op == "==":
            return left == right
        return left != right

    # ------------------------------------------------------- statements

    def run_block(self, stmts):
        for stmt in stmts:
            self.run_stmt(stmt)

    def run_stmt(self, stmt):
        if isinstance(stmt, AssignStmt):
            mask = (1 << self.widths[stmt.name]) - 1
            self.env[stmt.name] = self.eval(stmt.expr) & mask
        elif isinstance(stmt, DeclStmt):
            mask = (1 << stmt.width) - 1
            value = self.eval(stmt.init) if stmt.init is not None else 0
            self.env[stmt.name] = value & mask
        elif isinstance(stmt, LoadStmt):
            mask = (1 << self.widths[stmt.dst]) - 1
            self.env[stmt.dst] = self.load(stmt) & mask
        elif isinstance(stmt, StoreStmt):
            self.store(stmt)
        elif isinstance(stmt, WhileStmt):
            while self.test(stmt.cond):
                self.budget -= 1
                if self.budget < 0:
                    raise LoopBudgetExceeded(
                        f"line {stmt.line}: loop budget exhausted")
                self.run_block(stmt.body)
        elif isinstance(stmt, IfStmt):
            if self.test(stmt.cond):
                self.run_block(stmt.then)
            else:
                self.run_block(stmt.orelse)
        elif isinstance(stmt, EventStmt):
            value = self.env[stmt.local]
            self.events.append((stmt.event, value.to_bytes(4, "big")))
        else:
            raise TypeError(f"bad statement {stmt!r}")

    # ----------------------------------------------------- packet access

    def load(self, stmt: LoadStmt) -> int:
        decl = self.decls[stmt.src]
        if isinstance(decl, FieldDecl):
            if stmt.offset is None:
                return self.packet.read_field(
                    FieldRef(decl.region, decl.offset, decl.vtype))
            off = self.eval(stmt.offset)
            self._window_check(decl.length, off, stmt.vtype, stmt.line)
            return self.packet.read_field(
                FieldRef(decl.region, decl.offset + off, stmt.vtype))
        if isinstance(decl, MetaDecl):
            value = self.packet.read_meta(decl.name)
            if stmt.offset is None:
                return value
            off = self.eval(stmt.offset)
            return self._slice_scalar(value, off, stmt.vtype, stmt.line)
        if isinstance(decl, PropDecl):
            return self.packet.read_prop(decl.name)
        if isinstance(decl, AttrDecl):
            value = self._attr_value(decl)
            if stmt.offset is None:
                return value
            off = self.eval(stmt.offset)
            return self._slice_scalar(value, off, stmt.vtype, stmt.line)
        raise TypeError(f"bad object {decl!r}")

    def _attr_value(self, decl: AttrDecl):
        if decl.name in self.updates:
            return self.updates[decl.name]
        if decl.name in self.attrs:
            return self.attrs[decl.name]
        raise AttributeUnset(f"attribute {decl.name!r} was never set")

    def _window_check(self, length, off, vtype, line):
        if length is not None and off + vtype.width > length:
            raise OutOfBounds(
                f"line {line}: offset {off} leaves the {length}-byte window")

    def _slice_scalar(self, blob, off, vtype, line) -> int:
        if not isinstance(blob, (bytes, bytearray)):
            raise OutOfBounds(f"line {line}: object is scalar, not DATA")
        if off + vtype.width > len(blob):
            raise OutOfBounds(
                f"line {line}: offset {off} exceeds {len(blob)} bytes")
        return int.from_bytes(blob[off:off + vtype.width], "big")

    def store(self, stmt: StoreStmt):
        decl = self.decls[stmt.dst]
        value = self.eval(stmt.value)
        if isinstance(decl, PropDecl):
            raise PropertyWriteForbidden("properties are read-only")
        if isinstance(decl, FieldDecl):
            if stmt.offset is None:
                self.packet.write_field(
                    FieldRef(decl.region, decl.offset, decl.vtype), value)
            else:
                off = self.eval(stmt.offset)
                self._window_check(decl.length, off, stmt.vtype, stmt.line)
                self.packet.write_field(
                    FieldRef(decl.region, decl.offset + off, stmt.vtype),
                    value)
            return
        if isinstance(decl, MetaDecl):
            if stmt.offset is None:
                self.packet.write_meta(decl.name, decl.vtype, value)
            else:
                off = self.eval(stmt.offset)
                try:
                    blob = bytearray(self.packet.read_meta(decl.name))
                except Exception:
                    blob = bytearray(decl.length or 0)
                if off + stmt.vtype.width > len(blob):
                    raise OutOfBounds(
                        f"line {stmt.line}: offset {off} exceeds "
                        f"{len(blob)} bytes")
                blob[off:off + stmt.vtype.width] = value.to_bytes(
                    stmt.vtype.width, "big")
                self.packet.write_meta(decl.name, ValueType.DATA, bytes(blob))
            return
        if isinstance(decl, AttrDecl):
            if stmt.offset is None:
                mask = (1 << decl.vtype.bits) - 1 if decl.vtype.bits else None
                self.updates[decl.name] = value & mask if mask else value
            else:
                off = self.eval(stmt.offset)
                try:
                    blob = bytearray(self._attr_value(decl))
                except AttributeUnset:
                    if decl.length is None:
                        raise
                    blob = bytearray(decl.length)
                if off + stmt.vtype.width > len(blob):
                    raise OutOfBounds(
                        f"line {stmt.line}: offset {off} exceeds "
                        f"{len(blob)} bytes")
                blob[off:off + stmt.vtype.width] = value.to_bytes(
                    stmt.vtype.width, "big")
                self.updates[decl.name] = bytes(blob)
            return
        raise TypeError(f"bad object {decl!r}")


def interpret(checked: CheckedProgram, packet: Packet,
              attrs: dict | None = None,
              loop_budget: int = DEFAULT_LOOP_BUDGET) -> InterpResult:
    machine = _Machine(checked, packet, attrs, loop_budget)
    machine.run_block(checked.program.body)
    return InterpResult(machine.updates, machine.events)
