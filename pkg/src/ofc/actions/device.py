"""Trace-facing endpoints: injection sources, emission sinks, discard."""

from __future__ import annotations

from ..errors import ArityMismatch
from ..packet import Packet
from .base import ActionInstance, Category


def _int_arg(cls_name: str, args: list[str], what: str) -> int:
    if len(args) != 1:
        raise ArityMismatch(f"{cls_name} takes exactly one {what}")
    try:
        return int(args[0], 0)
    except ValueError:
        raise ArityMismatch(f"{cls_name}: {args[0]!r} is not a number") from None


class FromDevice(ActionInstance):
    """Injects trace records arriving on its device port."""

    NAME = "FromDevice"
    CATEGORY = Category.STARTING
    PARAM_HELP = "(port)"

    def _setup(self, args):
        self.port = _int_arg(self.NAME, args, "port number")


class ToDevice(ActionInstance):
    """Emits packets to its device port; drives upstream pulls."""

    NAME = "ToDevice"
    CATEGORY = Category.ENDING
    PARAM_HELP = "(port)"

    def _setup(self, args):
        self.port = _int_arg(self.NAME, args, "port number")

    def handle(self, packet: Packet, in_port: int = 0):
        self.packets_in += 1
        self.packets_out += 1
        return []


class Discard(ActionInstance):
    """Builtin sink: swallows and counts whatever reaches it."""

    NAME = "Discard"
    CATEGORY = Category.ENDING
    PARAM_HELP = "()"

    def _setup(self, args):
        if args:
            raise ArityMismatch("Discard takes no arguments")
        self.discarded = 0

    def handle(self, packet: Packet, in_port: int = 0):
        self.packets_in += 1
        self.discarded += 1
        return []
