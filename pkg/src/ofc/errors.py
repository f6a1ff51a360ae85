"""Exception taxonomy shared across the toolkit.

Exit-code convention for the CLI: 1 for parse/validation failures,
2 for semantic/infeasible failures raised while otherwise-valid inputs
are processed, 3 for I/O problems.
"""

from __future__ import annotations


class OfcError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 2


# ---------------------------------------------------------------- parsing

class ParseError(OfcError):
    """Syntax error in a script or pseudo program, with position info."""

    exit_code = 1

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        super().__init__(f"line {line}, col {col}: {message}" if line else message)


class ValidationError(OfcError):
    """A structurally invalid graph, program, or problem instance."""

    exit_code = 1


class DuplicateInstance(ValidationError):
    pass


class UnknownClass(ValidationError):
    pass


class UnknownInstance(ValidationError):
    pass


class ArityMismatch(ValidationError):
    pass


class IllegalPacketObjectUse(ParseError):
    """A packet-facing name was used inside an expression instead of LOAD/STORE."""


class UndeclaredName(ValidationError):
    pass


class CategoryUnsupported(ValidationError):
    pass


# ---------------------------------------------------------------- packets

class PacketError(OfcError):
    pass


class UnmarkedRegion(PacketError):
    """A field reference names a layer whose offset was never marked."""


class OutOfBounds(PacketError):
    """Field or byte access falls outside the current payload."""


class InsufficientHeadroom(PacketError):
    pass


class InsufficientTailroom(PacketError):
    pass


class Underflow(PacketError):
    """Decap or unpad asked to remove more bytes than the payload holds."""


class TypeMismatch(PacketError):
    pass


class PropertyWriteForbidden(PacketError):
    """Properties are read-only for every data-plane program."""


class UnknownName(PacketError):
    pass


# ---------------------------------------------------------------- actions

class ActionError(OfcError):
    pass


class UnknownAttribute(ActionError):
    pass


class AttributeUnset(ActionError):
    pass


class NotRuntimeSettable(ActionError):
    pass


class DefaultRouteMissing(ActionError):
    pass


class RuntimeFault(OfcError):
    """Wraps an error raised while an action processed a packet."""

    def __init__(self, instance: str, ordinal: int, cause: Exception):
        self.instance = instance
        self.ordinal = ordinal
        self.cause = cause
        super().__init__(f"{instance} failed on packet #{ordinal}: {cause!r}")


class LoopBudgetExceeded(OfcError):
    """A pseudo program exceeded its per-invocation loop budget."""


# ---------------------------------------------------------------- chains

class ChainError(OfcError):
    pass


class CapacityInvalid(ChainError):
    pass


class UnknownDp(ChainError):
    pass


class StillReferenced(ChainError):
    """A data-plane process cannot be removed while a chain references it."""


# ------------------------------------------------------------- scheduling

class SchedulingError(OfcError):
    pass


class Infeasible(SchedulingError):
    pass


class Unbounded(SchedulingError):
    pass


class NonConvergence(SchedulingError):
    pass


class TooLarge(SchedulingError):
    """The exhaustive oracle refuses instances beyond its search budget."""


class InfeasibleFlow(SchedulingError):
    """No placement exists for one flow given current survivors/capacity."""


# ---------------------------------------------------------------------- io

class InputOutputError(OfcError):
    exit_code = 3
