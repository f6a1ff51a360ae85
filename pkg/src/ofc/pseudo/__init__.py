"""Packet-program language: parser, checker, interpreter, registration."""

from __future__ import annotations

from importlib import resources

from .check import CheckedProgram, check_program
from .interp import DEFAULT_LOOP_BUDGET, InterpResult, interpret
from .nodes import PseudoProgram
from .parser import parse_program
from .register import register_user_action

__all__ = [
    "CheckedProgram", "DEFAULT_LOOP_BUDGET", "InterpResult", "PseudoProgram",
    "check_program", "interpret", "load_bundled", "bundled_names",
    "parse_program", "register_user_action",
]

def _bundle_dir():
    return resources.files("ofc.pseudo").joinpath("programs")


def bundled_names() -> list[str]:
    names = []
    for entry in _bundle_dir().iterdir():
        if entry.name.endswith(".ofp"):
            names.append(entry.name[:-4])
    return sorted(names)


def load_bundled(name: str) -> CheckedProgram:
    """Parse and check a program shipped with the package."""
    text = _bundle_dir().joinpath(f"{name}.ofp").read_text()
    return check_program(parse_program(text, name=name))
