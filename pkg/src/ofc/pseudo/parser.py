"""Lexer and recursive-descent parser for the packet-program language.

Lines starting with '@' declare packet objects or perform packet access
(LOAD/STORE/EVENT); everything else is a small C-like statement
language over unsigned locals.
"""

from __future__ import annotations

import re

from ..errors import IllegalPacketObjectUse, ParseError
from ..packet import Region, ValueType
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
    PseudoProgram,
    StoreStmt,
    Unary,
    Var,
    WhileStmt,
)

_TOKEN_RE = re.compile(r"""
    (?P<num>0[xX][0-9a-fA-F]+|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><<|>>|<=|>=|==|!=|[-+*&|^~<>=(){};])
  | (?P<ws>\s+)
  | (?P<bad>.)
""", re.VERBOSE)

_WIDTHS = {"char": 8, "short": 16, "int": 32}
_TYPES = {t.value: t for t in ValueType}
_REGIONS = {r.value: r for r in Region}


class _Tok:
    __slots__ = ("kind", "value", "line", "col")

    def __init__(self, kind, value, line, col):
        self.kind = kind          # num | ident | op | directive | eof
        self.value = value
        self.line = line
        self.col = col

    def __repr__(self):
        return f"{self.kind}:{self.value!r}"


def _lex(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("@"):
            toks.append(_Tok("directive", stripped[1:].strip(), line_no,
                             line.index("@") + 1))
            continue
        for m in _TOKEN_RE.finditer(line):
            kind = m.lastgroup
            if kind == "ws":
                continue
            if kind == "bad":
                raise ParseError(f"stray character {m.group()!r}",
                                 line_no, m.start() + 1)
            toks.append(_Tok(kind, m.group(), line_no, m.start() + 1))
    toks.append(_Tok("eof", "", len(text.splitlines()) + 1, 1))
    return toks


def _parse_type(word: str, line: int) -> ValueType:
    try:
        return _TYPES[word]
    except KeyError:
        raise ParseError(f"unknown type {word!r}", line) from None


def _parse_directive(text: str, line: int):
    parts = text.split()
    if not parts:
        raise ParseError("empty directive", line)
    kind, rest = parts[0].upper(), parts[1:]
    if kind == "FIELD":
        if len(rest) not in (4, 5):
            raise ParseError("FIELD needs: name region offset type [length]",
                             line)
        name, region_s, offset_s, type_s = rest[:4]
        region = _REGIONS.get(region_s.upper())
        if region is None:
            raise ParseError(f"unknown region {region_s!r}", line)
        vtype = _parse_type(type_s.upper(), line)
        length = int(rest[4], 0) if len(rest) == 5 else None
        if vtype is not ValueType.DATA and length is not None:
            raise ParseError("length is only for DATA fields", line)
        return FieldDecl(name, region, int(offset_s, 0), vtype, length)
    if kind == "META":
        if len(rest) not in (2, 3):
            raise ParseError("META needs: name type [length]", line)
        vtype = _parse_type(rest[1].upper(), line)
        length = int(rest[2], 0) if len(rest) == 3 else None
        if vtype is ValueType.DATA and length is None:
            raise ParseError("DATA metadata needs a length", line)
        return MetaDecl(rest[0], vtype, length)
    if kind == "PROP":
        if len(rest) != 1:
            raise ParseError("PROP needs: name", line)
        return PropDecl(rest[0])
    if kind == "ATTR":
        if len(rest) not in (2, 3):
            raise ParseError("ATTR needs: name type [length]", line)
        vtype = _parse_type(rest[1].upper(), line)
        length = int(rest[2], 0) if len(rest) == 3 else None
        return AttrDecl(rest[0], vtype, length)
    if kind == "LOAD":
        if len(rest) not in (2, 4):
            raise ParseError("LOAD needs: src dst [offset type]", line)
        offset = _operand(rest[2], line) if len(rest) == 4 else None
        vtype = _parse_type(rest[3].upper(), line) if len(rest) == 4 else None
        return LoadStmt(rest[0], rest[1], offset, vtype, line)
    if kind == "STORE":
        if len(rest) not in (2, 4):
            raise ParseError("STORE needs: dst value [offset type]", line)
        offset = _operand(rest[2], line) if len(rest) == 4 else None
        vtype = _parse_type(rest[3].upper(), line) if len(rest) == 4 else None
        return StoreStmt(rest[0], _operand(rest[1], line), offset, vtype, line)
    if kind == "EVENT":
        if len(rest) != 2:
            raise ParseError("EVENT needs: name local", line)
        return EventStmt(rest[0], rest[1], line)
    raise ParseError(f"unknown directive {kind!r}", line)


def _operand(word: str, line: int):
    """A directive operand: integer literal or identifier."""
    try:
        return Num(int(word, 0))
    except ValueError:
        pass
    if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", word):
        return Var(word, line)
    raise ParseError(f"bad operand {word!r}", line)


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.pos = 0

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, value: str) -> _Tok:
        tok = self.next()
        if tok.kind == "eof" or tok.value != value:
            raise ParseError(f"expected {value!r}, found {tok.value!r}",
                             tok.line, tok.col)
        return tok

    # ------------------------------------------------------- statements

    def parse_block(self) -> list:
        self.expect("{")
        body = []
        while self.peek().value != "}" or self.peek().kind != "op":
            if self.peek().kind == "eof":
                raise ParseError("missing '}'", self.peek().line)
            body.append(self.parse_statement())
        self.next()
        return body

    def parse_statement(self):
        tok = self.peek()
        if tok.kind == "directive":
            self.next()
            stmt = _parse_directive(tok.value, tok.line)
            if isinstance(stmt, (FieldDecl, MetaDecl, PropDecl, AttrDecl)):
                raise ParseError(
                    "packet object declarations belong at the top level",
                    tok.line)
            return stmt
        if tok.kind == "ident" and tok.value == "unsigned":
            return self.parse_decl()
        if tok.kind == "ident" and tok.value == "while":
            return self.parse_while()
        if tok.kind == "ident" and tok.value == "if":
            return self.parse_if()
        if tok.kind == "ident":
            return self.parse_assign()
        raise ParseError(f"unexpected {tok.value!r}", tok.line, tok.col)

    def parse_decl(self) -> DeclStmt:
        start = self.expect("unsigned")
        width_tok = self.next()
        width = _WIDTHS.get(width_tok.value)
        if width is None:
            raise ParseError(f"unknown width {width_tok.value!r}",
                             width_tok.line, width_tok.col)
        name_tok = self.next()
        if name_tok.kind != "ident":
            raise ParseError("expected a variable name",
                             name_tok.line, name_tok.col)
        init = None
        if self.peek().value == "=" and self.peek().kind == "op":
            self.next()
            init = self.parse_expr()
        self.expect(";")
        return DeclStmt(width, name_tok.value, init, start.line)

    def parse_assign(self) -> AssignStmt:
        name_tok = self.next()
        self.expect("=")
        expr = self.parse_expr()
        self.expect(";")
        return AssignStmt(name_tok.value, expr, name_tok.line)

    def parse_while(self) -> WhileStmt:
        start = self.expect("while")
        self.expect("(")
        cond = self.parse_cond()
        self.expect(")")
        return WhileStmt(cond, self.parse_block(), start.line)

    def parse_if(self) -> IfStmt:
        start = self.expect("if")
        self.expect("(")
        cond = self.parse_cond()
        self.expect(")")
        then = self.parse_block()
        orelse = []
        if self.peek().kind == "ident" and self.peek().value == "else":
            self.next()
            if self.peek().kind == "ident" and self.peek().value == "if":
                orelse = [self.parse_if()]
            else:
                orelse = self.parse_block()
        return IfStmt(cond, then, orelse, start.line)

    # ------------------------------------------------------ expressions

    def parse_cond(self) -> Cond:
        left = self.parse_expr()
        tok = self.next()
        if tok.kind != "op" or tok.value not in ("<", "<=", ">", ">=", "==",
                                                 "!="):
            raise ParseError(f"expected a comparison, found {tok.value!r}",
                             tok.line, tok.col)
        right = self.parse_expr()
        return Cond(tok.value, left, right)

    # precedence, low to high: | ^ & (<< >>) (+ -) (*) unary
    _LEVELS = [("|",), ("^",), ("&",), ("<<", ">>"), ("+", "-"), ("*",)]

    def parse_expr(self, level: int = 0):
        if level == len(self._LEVELS):
            return self.parse_unary()
        expr = self.parse_expr(level + 1)
        while (self.peek().kind == "op"
               and self.peek().value in self._LEVELS[level]):
            op = self.next().value
            expr = Binary(op, expr, self.parse_expr(level + 1))
        return expr

    def parse_unary(self):
        tok = self.peek()
        if tok.kind == "op" and tok.value in ("~", "-"):
            self.next()
            return Unary(tok.value, self.parse_unary())
        return self.parse_atom()

    def parse_atom(self):
        tok = self.next()
        if tok.kind == "num":
            return Num(int(tok.value, 0))
        if tok.kind == "ident":
            return Var(tok.value, tok.line)
        if tok.kind == "op" and tok.value == "(":
            expr = self.parse_expr()
            self.expect(")")
            return expr
        raise ParseError(f"unexpected {tok.value!r} in expression",
                         tok.line, tok.col)


def _expr_vars(expr):
    if isinstance(expr, Var):
        yield expr
    elif isinstance(expr, Unary):
        yield from _expr_vars(expr.operand)
    elif isinstance(expr, Binary):
        yield from _expr_vars(expr.left)
        yield from _expr_vars(expr.right)


def _walk_exprs(stmts):
    for stmt in stmts:
        if isinstance(stmt, DeclStmt) and stmt.init is not None:
            yield from _expr_vars(stmt.init)
        elif isinstance(stmt, AssignStmt):
            yield from _expr_vars(stmt.expr)
        elif isinstance(stmt, (WhileStmt, IfStmt)):
            yield from _expr_vars(stmt.cond.left)
            yield from _expr_vars(stmt.cond.right)
            if isinstance(stmt, WhileStmt):
                yield from _walk_exprs(stmt.body)
            else:
                yield from _walk_exprs(stmt.then)
                yield from _walk_exprs(stmt.orelse)


def parse_program(text: str, name: str = "anonymous") -> PseudoProgram:
    toks = _lex(text)
    decls: dict[str, object] = {}
    body: list = []
    parser = _Parser(toks)
    while parser.peek().kind != "eof":
        tok = parser.peek()
        if tok.kind == "directive":
            head = tok.value.split(None, 1)[0].upper() if tok.value else ""
            if head in ("FIELD", "META", "PROP", "ATTR"):
                parser.next()
                decl = _parse_directive(tok.value, tok.line)
                if decl.name in decls:
                    raise ParseError(
                        f"packet object {decl.name!r} declared twice",
                        tok.line)
                decls[decl.name] = decl
                continue
        body.append(parser.parse_statement())

    # packet object names may only appear in LOAD/STORE/EVENT directives
    for var in _walk_exprs(body):
        if var.name in decls:
            raise IllegalPacketObjectUse(
                f"packet object {var.name!r} used in an expression; "
                "move the access into LOAD/STORE", var.line)
    return PseudoProgram(name, decls, body)
