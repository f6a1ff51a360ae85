"""AST node types for the packet-program language."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..packet import Region, ValueType


@dataclass(frozen=True)
class FieldDecl:
    name: str
    region: Region
    offset: int
    vtype: ValueType
    length: int | None = None   # DATA windows may leave length open


@dataclass(frozen=True)
class MetaDecl:
    name: str
    vtype: ValueType
    length: int | None = None


@dataclass(frozen=True)
class PropDecl:
    name: str


@dataclass(frozen=True)
class AttrDecl:
    name: str
    vtype: ValueType
    length: int | None = None


PacketDecl = FieldDecl | MetaDecl | PropDecl | AttrDecl


# ------------------------------------------------------------ expressions

@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Var:
    name: str
    line: int = 0


@dataclass(frozen=True)
class Unary:
    op: str            # '~' or '-'
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str            # + - * & | ^ << >>
    left: "Expr"
    right: "Expr"


Expr = Num | Var | Unary | Binary


@dataclass(frozen=True)
class Cond:
    op: str            # < <= > >= == !=
    left: Expr
    right: Expr


# ------------------------------------------------------------- statements

@dataclass
class DeclStmt:
    width: int         # bits: 8, 16, 32
    name: str
    init: Expr | None
    line: int = 0


@dataclass
class AssignStmt:
    name: str
    expr: Expr
    line: int = 0


@dataclass
class WhileStmt:
    cond: Cond
    body: list
    line: int = 0


@dataclass
class IfStmt:
    cond: Cond
    then: list
    orelse: list = field(default_factory=list)
    line: int = 0


@dataclass
class LoadStmt:
    src: str           # packet object name
    dst: str           # local variable
    offset: Expr | None = None
    vtype: ValueType | None = None
    line: int = 0


@dataclass
class StoreStmt:
    dst: str           # packet object name
    value: Expr        # Var or Num only
    offset: Expr | None = None
    vtype: ValueType | None = None
    line: int = 0


@dataclass
class EventStmt:
    event: str
    local: str
    line: int = 0


Stmt = DeclStmt | AssignStmt | WhileStmt | IfStmt | LoadStmt | StoreStmt | EventStmt


@dataclass
class PseudoProgram:
    name: str
    decls: dict[str, PacketDecl]
    body: list
