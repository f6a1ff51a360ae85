"""Action graph construction and validation.

build_graph resolves declarations against a registry and materializes
edges; an undeclared instance named `discard` becomes the builtin sink,
which accepts any number of inbound edges. validate_graph reports
structural problems (dangling ports, cycles, unreachable nodes) and
lists config-phase attributes still unset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .actions import Category, Registry, default_registry
from .errors import (
    ArityMismatch,
    DuplicateInstance,
    UnknownInstance,
    ValidationError,
)
from .script import Connection, ScriptAst

SINK_NAME = "discard"


@dataclass
class NodeSpec:
    name: str
    class_name: str
    args: list[str]
    category: Category
    n_in: int
    n_out: int
    is_sink: bool = False


@dataclass
class Edge:
    src: str
    src_port: int
    dst: str
    dst_port: int


@dataclass
class ValidationReport:
    ok: bool
    failures: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    unset_attributes: dict[str, list[str]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"ok": self.ok, "failures": self.failures,
                "warnings": self.warnings,
                "unset_attributes": self.unset_attributes}


@dataclass
class ActionGraph:
    nodes: dict[str, NodeSpec]
    edges: list[Edge]

    def out_edges(self, name: str) -> list[Edge]:
        return [e for e in self.edges if e.src == name]

    def in_edges(self, name: str) -> list[Edge]:
        return [e for e in self.edges if e.dst == name]

    def topo_order(self) -> list[str] | None:
        """Kahn order over instances, or None when a cycle exists."""
        indeg = {n: 0 for n in self.nodes}
        for e in self.edges:
            indeg[e.dst] += 1
        ready = [n for n, d in indeg.items() if d == 0]
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for e in self.out_edges(n):
                indeg[e.dst] -= 1
                if indeg[e.dst] == 0:
                    ready.append(e.dst)
        return order if len(order) == len(self.nodes) else None


def build_graph(ast: ScriptAst, registry: Registry | None = None) -> ActionGraph:
    registry = registry or default_registry()
    nodes: dict[str, NodeSpec] = {}
    for decl in ast.declarations:
        if decl.instance in nodes:
            raise DuplicateInstance(
                f"line {decl.line}: instance {decl.instance!r} declared twice")
        # instantiate once to validate args and learn port arity
        probe = registry.instantiate(decl.class_name, decl.instance, decl.args)
        nodes[decl.instance] = NodeSpec(
            decl.instance, decl.class_name, list(decl.args),
            probe.CATEGORY, probe.n_in, probe.n_out)

    edges: list[Edge] = []
    for conn in ast.connections:
        for endpoint in (conn.src, conn.dst):
            if endpoint not in nodes:
                if endpoint == SINK_NAME:
                    nodes[SINK_NAME] = NodeSpec(
                        SINK_NAME, "Discard", [], Category.ENDING,
                        1, 0, is_sink=True)
                else:
                    raise UnknownInstance(
                        f"line {conn.line}: {endpoint!r} was never declared")
        _check_ports(nodes, conn)
        edges.append(Edge(conn.src, conn.src_port, conn.dst, conn.dst_port))
    return ActionGraph(nodes, edges)


def _check_ports(nodes: dict[str, NodeSpec], conn: Connection):
    src, dst = nodes[conn.src], nodes[conn.dst]
    if conn.src_port >= src.n_out:
        raise ArityMismatch(
            f"line {conn.line}: {src.name} has {src.n_out} egress ports, "
            f"port {conn.src_port} does not exist")
    if dst.is_sink:
        if conn.dst_port != 0:
            raise ArityMismatch(
                f"line {conn.line}: the sink has a single ingress port 0")
    elif conn.dst_port >= dst.n_in:
        raise ArityMismatch(
            f"line {conn.line}: {dst.name} has {dst.n_in} ingress ports, "
            f"port {conn.dst_port} does not exist")


def validate_graph(graph: ActionGraph,
                   registry: Registry | None = None) -> ValidationReport:
    registry = registry or default_registry()
    failures: list[str] = []
    warnings: list[str] = []

    used_out: dict[tuple[str, int], int] = {}
    used_in: dict[tuple[str, int], int] = {}
    for e in graph.edges:
        used_out[(e.src, e.src_port)] = used_out.get((e.src, e.src_port), 0) + 1
        used_in[(e.dst, e.dst_port)] = used_in.get((e.dst, e.dst_port), 0) + 1

    for key, count in sorted(used_out.items()):
        if count > 1:
            failures.append(
                f"egress port {key[0]}[{key[1]}] connected {count} times")
    for key, count in sorted(used_in.items()):
        if count > 1 and not graph.nodes[key[0]].is_sink:
            failures.append(
                f"ingress port {key[0]}[{key[1]}] connected {count} times")

    for node in graph.nodes.values():
        for port in range(node.n_out):
            if (node.name, port) not in used_out:
                failures.append(f"dangling egress port {node.name}[{port}]")
        if node.is_sink:
            continue
        for port in range(node.n_in):
            if (node.name, port) not in used_in:
                failures.append(f"dangling ingress port {node.name}[{port}]")

    starts = [n for n in graph.nodes.values() if n.category is Category.STARTING]
    if not starts:
        failures.append("graph has no STARTING node")

    if graph.topo_order() is None:
        failures.append("graph contains a cycle")
    else:
        reachable = set()
        frontier = [n.name for n in starts]
        while frontier:
            name = frontier.pop()
            if name in reachable:
                continue
            reachable.add(name)
            frontier.extend(e.dst for e in graph.out_edges(name))
        for name in sorted(graph.nodes):
            if name not in reachable:
                failures.append(f"node {name} unreachable from any source")

    unset: dict[str, list[str]] = {}
    for node in graph.nodes.values():
        if node.is_sink:
            continue
        probe = registry.instantiate(node.class_name, node.name, node.args)
        missing = probe.unset_config_attrs()
        if missing:
            unset[node.name] = missing
            warnings.append(
                f"{node.name}: set attributes before running: "
                + ", ".join(missing))

    return ValidationReport(not failures, failures, warnings, unset)


def parse_and_validate(text: str, registry: Registry | None = None):
    """Parse, build, validate; returns (graph, report)."""
    from .script import parse_script
    ast = parse_script(text)
    graph = build_graph(ast, registry)
    return graph, validate_graph(graph, registry)


def graph_summary(graph: ActionGraph) -> dict:
    return {
        "nodes": len(graph.nodes),
        "edges": len(graph.edges),
        "instances": {n.name: n.class_name for n in graph.nodes.values()},
    }


class GraphValidationFailed(ValidationError):
    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("; ".join(report.failures))
