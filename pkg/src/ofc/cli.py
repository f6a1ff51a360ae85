"""Command-line entry point: ``ofc``.

Subcommands::

    check         parse and validate an action-graph script
    run-action    run one packet-program on one packet
    run-pipeline  run an action-graph script over a packet trace
    schedule      place flows (offline | online | oracle)
    simulate      run a controller scenario with packet co-simulation
    catalog       dump the action registry and bundled packet programs

All structured output is JSON on stdout (sorted keys, two-space
indent), so identical invocations with identical inputs produce
byte-identical bytes.  Exit codes: 0 success, 1 parse/validation
failure, 2 infeasible or semantic failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys

from . import __version__
from .actions import default_registry
from .controller import Scenario, run_scenario
from .errors import InputOutputError, OfcError, ParseError
from .graph import parse_and_validate
from .packet import PROTO_TCP, PROTO_UDP, Region, new_packet
from .pipeline import Pipeline, dump_trace, load_trace
from .pseudo import bundled_names
from .pseudo.check import check_program
from .pseudo.interp import interpret
from .pseudo.parser import parse_program
from .scheduling import (DEFAULT_EPSILON, SchedulingProblem,
                         brute_force_optimal, lp_lower_bound, objective,
                         offline_round, online_schedule)


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (validation family) on bad usage."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _emit(document: dict) -> None:
    sys.stdout.write(json.dumps(document, sort_keys=True, indent=2) + "\n")


def _read_text(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise InputOutputError(f"cannot read {path}: {exc}") from None


def _read_json(path: str):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc.msg}",
                         line=exc.lineno, col=exc.colno) from None


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputOutputError(f"cannot write {path}: {exc}") from None


def _read_hex(path: str) -> bytes:
    raw = "".join(_read_text(path).split())
    try:
        return bytes.fromhex(raw)
    except ValueError:
        raise ParseError(f"{path}: not a hex string") from None


# ------------------------------------------------------------- commands


def _cmd_check(args) -> int:
    text = _read_text(args.script)
    graph, report = parse_and_validate(text)
    document = report.to_json()
    document["nodes"] = len(graph.nodes)
    document["edges"] = len(graph.edges)
    document["node_names"] = sorted(graph.nodes)
    _emit(document)
    return 0 if report.ok else 1


def _mark_input_packet(packet) -> None:
    """Set layer offsets, accepting bare IP packets as well as frames.

    A buffer whose version nibble says IPv4 is marked as network data
    even when truncated, so out-of-range reads fault as OutOfBounds
    rather than as an unmarked region.
    """
    packet.mark_layers()
    data = packet.payload
    if (Region.NETWORK not in packet.layer_offsets
            and len(data) >= 1 and data[0] >> 4 == 4):
        packet.layer_offsets[Region.NETWORK] = 0
        ihl = (data[0] & 0x0F) * 4
        if (len(data) >= 20 and 20 <= ihl < len(data)
                and data[9] in (PROTO_TCP, PROTO_UDP)):
            packet.layer_offsets[Region.TRANSPORT] = ihl


def _cmd_run_action(args) -> int:
    text = _read_text(args.program)
    name = os.path.splitext(os.path.basename(args.program))[0]
    checked = check_program(parse_program(text, name=name))
    packet = new_packet(_read_hex(args.packet).hex())
    _mark_input_packet(packet)
    attrs = _read_json(args.attrs) if args.attrs else None
    result = interpret(checked, packet, attrs)
    out_hex = packet.payload.hex()
    if args.out:
        _write_text(args.out, out_hex + "\n")
    _emit({
        "program": name,
        "packet": out_hex,
        "attr_updates": {k: (v.hex() if isinstance(v, bytes) else v)
                         for k, v in result.attr_updates.items()},
        "events": [{"event": n, "payload": p.hex()}
                   for n, p in result.events],
    })
    return 0


def _cmd_run_pipeline(args) -> int:
    text = _read_text(args.script)
    graph, report = parse_and_validate(text)
    if not report.ok:
        _emit(report.to_json())
        return 1
    pipeline = Pipeline(graph)
    if args.attrs:
        pipeline.set_attributes(_read_json(args.attrs))
    trace = load_trace(args.trace)
    result = pipeline.run(trace, ticks=args.ticks)
    if args.out:
        dump_trace(result.outputs, args.out)
    if args.events:
        _write_text(args.events, "".join(
            json.dumps(ev.to_json(), sort_keys=True) + "\n"
            for ev in result.events))
    _emit({
        "counters": result.counters,
        "faults": [f.to_json() for f in result.faults],
        "outputs": len(result.outputs),
        "events": len(result.events),
        "balanced": pipeline.accounting_balanced(),
    })
    return 0


def _cmd_schedule(args) -> int:
    problem = SchedulingProblem.from_json(_read_json(args.problem))
    document = {"mode": args.mode, "epsilon": args.epsilon}
    if args.mode == "offline":
        assignment = offline_round(problem, args.epsilon)
        document["lp_bound"] = lp_lower_bound(problem)
    elif args.mode == "online":
        assignment = online_schedule(problem, eps0=args.epsilon,
                                     order=args.order, strict=True)
    else:
        assignment = brute_force_optimal(problem)
        document.pop("epsilon")
    document["objective"] = objective(problem, assignment)
    document["assignment"] = assignment.to_json()
    if args.out:
        _write_text(args.out, json.dumps(assignment.to_json(),
                                         sort_keys=True, indent=2) + "\n")
    _emit(document)
    return 0


def _cmd_simulate(args) -> int:
    scenario = Scenario.from_json(_read_json(args.scenario))
    metrics = run_scenario(scenario,
                           ticks_per_event=args.ticks_per_event)
    if args.out:
        _write_text(args.out, json.dumps(metrics, sort_keys=True,
                                         indent=2) + "\n")
    _emit(metrics)
    return 0


def _cmd_catalog(args) -> int:
    registry = default_registry()
    _emit({
        "actions": registry.catalog(),
        "packet_programs": bundled_names(),
    })
    return 0


# --------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ofc",
                     description="software-defined middlebox toolkit")
    parser.add_argument("--version", action="version",
                        version=json.dumps({"name": "ofc",
                                            "version": __version__}))
    parser.add_argument("--seed", type=int, default=None,
                        help="seed for randomized defaults "
                             "(falls back to OFC_SEED)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="validate an action-graph script")
    p.add_argument("script")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("run-action", help="run a packet program")
    p.add_argument("program")
    p.add_argument("--packet", required=True,
                   help="file containing the packet as hex")
    p.add_argument("--attrs", help="JSON file of attribute values")
    p.add_argument("--out", help="write resulting packet hex here")
    p.set_defaults(func=_cmd_run_action)

    p = sub.add_parser("run-pipeline",
                       help="run a script over a packet trace")
    p.add_argument("script")
    p.add_argument("--trace", required=True, help="JSONL packet trace")
    p.add_argument("--out", help="write emitted trace here (JSONL)")
    p.add_argument("--events", help="write emitted events here (JSONL)")
    p.add_argument("--ticks", type=int, default=None)
    p.add_argument("--attrs",
                   help="JSON file: instance -> attribute -> value")
    p.set_defaults(func=_cmd_run_pipeline)

    p = sub.add_parser("schedule", help="place flows on boxes")
    p.add_argument("mode", choices=["offline", "online", "oracle"])
    p.add_argument("--problem", required=True, help="problem JSON file")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON,
                   help="forbidden threshold")
    p.add_argument("--order", choices=["arrival", "amount"],
                   default="arrival", help="online arrival order")
    p.add_argument("--out", help="write the assignment JSON here")
    p.set_defaults(func=_cmd_schedule)

    p = sub.add_parser("simulate", help="run a controller scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", help="write metrics JSON here")
    p.add_argument("--ticks-per-event", type=int, default=1)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("catalog", help="dump the action registry")
    p.set_defaults(func=_cmd_catalog)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    seed = args.seed
    if seed is None:
        env = os.environ.get("OFC_SEED")
        if env is not None:
            try:
                seed = int(env)
            except ValueError:
                print("ofc: error: OFC_SEED must be an integer",
                      file=sys.stderr)
                return 1
    if seed is not None:
        random.seed(seed)
    try:
        return args.func(args)
    except OfcError as exc:
        document = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ParseError):
            document["line"] = exc.line
            document["col"] = exc.col
        _emit(document)
        return exc.exit_code
    except OSError as exc:
        _emit({"error": "OSError", "message": str(exc)})
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
