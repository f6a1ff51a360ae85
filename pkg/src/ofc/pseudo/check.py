"""Semantic checks for parsed packet programs.

Rejects undeclared names, property writes, DATA access without an
index, and name collisions; width-losing moves come back as warnings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import PropertyWriteForbidden, UndeclaredName, ValidationError
from ..packet import ValueType
from .nodes import (
    AssignStmt,
    AttrDecl,
    DeclStmt,
    EventStmt,
    FieldDecl,
    IfStmt,
    LoadStmt,
    MetaDecl,
    Num,
    PropDecl,
    PseudoProgram,
    StoreStmt,
    Var,
    WhileStmt,
)
from .parser import _expr_vars


@dataclass
class CheckedProgram:
    program: PseudoProgram
    locals: dict[str, int]              # name -> width in bits
    warnings: list[str] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.program.name

    @property
    def attr_decls(self) -> dict[str, AttrDecl]:
        return {n: d for n, d in self.program.decls.items()
                if isinstance(d, AttrDecl)}

    @property
    def event_names(self) -> tuple[str, ...]:
        names = []

        def scan(stmts):
            for s in stmts:
                if isinstance(s, EventStmt):
                    names.append(s.event)
                elif isinstance(s, WhileStmt):
                    scan(s.body)
                elif isinstance(s, IfStmt):
                    scan(s.then)
                    scan(s.orelse)
        scan(self.program.body)
        return tuple(dict.fromkeys(names))


def _object_width(decl) -> int | None:
    """Bit width of a scalar packet object, None for DATA."""
    vtype = getattr(decl, "vtype", None)
    if vtype is None:            # properties are integers
        return 32
    return vtype.bits


class _Checker:
    def __init__(self, program: PseudoProgram):
        self.program = program
        self.locals: dict[str, int] = {}
        self.warnings: list[str] = []

    def fail(self, message: str, line: int):
        raise ValidationError(f"line {line}: {message}")

    def require_local(self, name: str, line: int):
        if name not in self.locals:
            if name in self.program.decls:
                self.fail(f"{name!r} is a packet object, not a local", line)
            raise UndeclaredName(f"line {line}: {name!r} was never declared")

    def require_object(self, name: str, line: int):
        if name not in self.program.decls:
            raise UndeclaredName(
                f"line {line}: no packet object named {name!r}")
        return self.program.decls[name]

    def check_expr(self, expr, line: int):
        for var in _expr_vars(expr):
            self.require_local(var.name, var.line or line)

    def check_operand(self, operand, line: int):
        if isinstance(operand, Var):
            self.require_local(operand.name, line)

    # ------------------------------------------------------- statements

    def check_block(self, stmts):
        for stmt in stmts:
            self.check_stmt(stmt)

    def check_stmt(self, stmt):
        if isinstance(stmt, DeclStmt):
            if stmt.name in self.locals:
                self.fail(f"{stmt.name!r} declared twice", stmt.line)
            if stmt.name in self.program.decls:
                self.fail(f"{stmt.name!r} collides with a packet object",
                          stmt.line)
            if stmt.init is not None:
                self.check_expr(stmt.init, stmt.line)
            self.locals[stmt.name] = stmt.width
        elif isinstance(stmt, AssignStmt):
            self.require_local(stmt.name, stmt.line)
            self.check_expr(stmt.expr, stmt.line)
        elif isinstance(stmt, WhileStmt):
            self.check_expr(stmt.cond.left, stmt.line)
            self.check_expr(stmt.cond.right, stmt.line)
            self.check_block(stmt.body)
        elif isinstance(stmt, IfStmt):
            self.check_expr(stmt.cond.left, stmt.line)
            self.check_expr(stmt.cond.right, stmt.line)
            self.check_block(stmt.then)
            self.check_block(stmt.orelse)
        elif isinstance(stmt, LoadStmt):
            self.check_load(stmt)
        elif isinstance(stmt, StoreStmt):
            self.check_store(stmt)
        elif isinstance(stmt, EventStmt):
            self.require_local(stmt.local, stmt.line)
        else:
            self.fail(f"unhandled statement {stmt!r}", getattr(stmt, "line", 0))

    def check_load(self, stmt: LoadStmt):
        decl = self.require_object(stmt.src, stmt.line)
        self.require_local(stmt.dst, stmt.line)
        if stmt.offset is not None:
            self.check_operand(stmt.offset, stmt.line)
            if isinstance(decl, PropDecl):
                self.fail("properties cannot be indexed", stmt.line)
            if getattr(decl, "vtype", None) is not ValueType.DATA:
                self.fail(f"{stmt.src!r} is scalar; indexed access needs "
                          "a DATA object", stmt.line)
            if stmt.vtype is ValueType.DATA:
                self.fail("indexed access loads a scalar type", stmt.line)
            src_bits = stmt.vtype.bits
        else:
            if getattr(decl, "vtype", None) is ValueType.DATA:
                self.fail(f"{stmt.src!r} is DATA; use the indexed form",
                          stmt.line)
            src_bits = _object_width(decl)
        dst_bits = self.locals[stmt.dst]
        if src_bits and dst_bits < src_bits:
            self.warnings.append(
                f"line {stmt.line}: loading {src_bits}-bit value into "
                f"{dst_bits}-bit {stmt.dst!r} truncates")

    def check_store(self, stmt: StoreStmt):
        decl = self.require_object(stmt.dst, stmt.line)
        if isinstance(decl, PropDecl):
            raise PropertyWriteForbidden(
                f"line {stmt.line}: properties are read-only")
        self.check_operand(stmt.value, stmt.line)
        if stmt.offset is not None:
            self.check_operand(stmt.offset, stmt.line)
            if getattr(decl, "vtype", None) is not ValueType.DATA:
                self.fail(f"{stmt.dst!r} is scalar; indexed access needs "
                          "a DATA object", stmt.line)
            if stmt.vtype is ValueType.DATA:
                self.fail("indexed access stores a scalar type", stmt.line)
            dst_bits = stmt.vtype.bits
        else:
            if getattr(decl, "vtype", None) is ValueType.DATA:
                self.fail(f"{stmt.dst!r} is DATA; use the indexed form",
                          stmt.line)
            dst_bits = _object_width(decl)
        if isinstance(stmt.value, Var) and dst_bits:
            src_bits = self.locals[stmt.value.name]
            if src_bits > dst_bits:
                self.warnings.append(
                    f"line {stmt.line}: storing {src_bits}-bit "
                    f"{stmt.value.name!r} into {dst_bits}-bit "
                    f"{stmt.dst!r} truncates")
        if isinstance(stmt.value, Num) and dst_bits:
            if stmt.value.value >= (1 << dst_bits):
                self.warnings.append(
                    f"line {stmt.line}: literal {stmt.value.value:#x} "
                    f"exceeds {dst_bits}-bit target")


def check_program(program: PseudoProgram) -> CheckedProgram:
    checker = _Checker(program)
    checker.check_block(program.body)
    return CheckedProgram(program, checker.locals, checker.warnings)
