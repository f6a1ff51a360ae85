"""Action-graph script parser.

Grammar, line oriented with ';' separating statements and '#' comments:

    @ ClassName(arg, arg, ...) instance_name     declaration
    @ ClassName instance_name                    declaration, no args
    src_instance out_port in_port dst_instance   connection

Instance and class names are identifiers; arguments are free-form
tokens split on top-level commas.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ParseError

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")


@dataclass
class Declaration:
    class_name: str
    args: list[str]
    instance: str
    line: int = 0


@dataclass
class Connection:
    src: str
    src_port: int
    dst_port: int
    dst: str
    line: int = 0


@dataclass
class ScriptAst:
    declarations: list[Declaration] = field(default_factory=list)
    connections: list[Connection] = field(default_factory=list)


def _split_statements(text: str):
    """Yield (line_no, statement) with comments stripped."""
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        for part in line.split(";"):
            part = part.strip()
            if part:
                yield line_no, part


def _split_args(blob: str, line: int) -> list[str]:
    args, depth, current = [], 0, []
    for ch in blob:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ParseError("unbalanced ')' in arguments", line)
        if ch == "," and depth == 0:
            args.append("".join(current).strip())
            current = []
        else:
            current.append(ch)
    if depth:
        raise ParseError("unbalanced '(' in arguments", line)
    tail = "".join(current).strip()
    if tail or args:
        args.append(tail)
    if any(not a for a in args):
        raise ParseError("empty argument", line)
    return args


def _parse_declaration(stmt: str, line: int) -> Declaration:
    body = stmt[1:].strip()
    if "(" in body:
        head, _, rest = body.partition("(")
        class_name = head.strip()
        close = rest.rfind(")")
        if close < 0:
            raise ParseError("missing ')' in declaration", line)
        args = _split_args(rest[:close], line)
        instance = rest[close + 1:].strip()
    else:
        parts = body.split()
        if len(parts) != 2:
            raise ParseError(
                "declaration needs a class and an instance name", line)
        class_name, instance = parts
        args = []
    if not _IDENT.match(class_name):
        raise ParseError(f"bad class name {class_name!r}", line)
    if not _IDENT.match(instance):
        raise ParseError(f"bad instance name {instance!r}", line)
    return Declaration(class_name, args, instance, line)


def _parse_connection(stmt: str, line: int) -> Connection:
    parts = stmt.split()
    if len(parts) != 4:
        raise ParseError(
            "connection needs: src out_port in_port dst", line)
    src, sport_s, dport_s, dst = parts
    if not _IDENT.match(src):
        raise ParseError(f"bad instance name {src!r}", line)
    if not _IDENT.match(dst):
        raise ParseError(f"bad instance name {dst!r}", line)
    try:
        sport, dport = int(sport_s), int(dport_s)
    except ValueError:
        raise ParseError("ports must be integers", line) from None
    if sport < 0 or dport < 0:
        raise ParseError("ports must be nonnegative", line)
    return Connection(src, sport, dport, dst, line)


def parse_script(text: str) -> ScriptAst:
    ast = ScriptAst()
    for line_no, stmt in _split_statements(text):
        if stmt.startswith("@"):
            ast.declarations.append(_parse_declaration(stmt, line_no))
        else:
            ast.connections.append(_parse_connection(stmt, line_no))
    return ast


def pretty_print(ast: ScriptAst) -> str:
    """Canonical text form; parse(pretty_print(ast)) round-trips."""
    lines = []
    for d in ast.declarations:
        args = f"({', '.join(d.args)})" if d.args else ""
        lines.append(f"@ {d.class_name}{args} {d.instance}")
    if ast.declarations and ast.connections:
        lines.append("")
    for c in ast.connections:
        lines.append(f"{c.src} {c.src_port} {c.dst_port} {c.dst}")
    return "\n".join(lines) + "\n"
