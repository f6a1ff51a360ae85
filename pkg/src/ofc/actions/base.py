"""Action base classes, attribute plumbing, and the class registry.

Every action belongs to one of five categories fixing its port arity:
STARTING 0-in/1-out, ONE_TO_ONE 1/1, ONE_TO_MANY 1/N (N fixed at
instantiation), MANY_TO_ONE N/1, ENDING 1/0. Control-plane visible
state lives in named attributes; data-plane notifications leave as
events.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from ..errors import (
    ArityMismatch,
    AttributeUnset,
    NotRuntimeSettable,
    TypeMismatch,
    UnknownAttribute,
    UnknownClass,
)
from ..packet import Packet, ValueType


class Category(enum.Enum):
    STARTING = "STARTING"
    ONE_TO_ONE = "ONE_TO_ONE"
    ONE_TO_MANY = "ONE_TO_MANY"
    MANY_TO_ONE = "MANY_TO_ONE"
    ENDING = "ENDING"


@dataclass
class AttributeSpec:
    name: str
    vtype: ValueType
    runtime_settable: bool = True
    config_required: bool = False


@dataclass
class Event:
    """A data-plane notification surfaced to the control plane."""

    source: str
    name: str
    payload: bytes
    tick: int = -1
    seq: int = -1

    def to_json(self) -> dict:
        return {"tick": self.tick, "seq": self.seq, "source": self.source,
                "event": self.name, "payload": self.payload.hex()}


_UNSET = object()


def _coerce(vtype: ValueType, value) -> int | bytes:
    """Coerce JSON-ish attribute values to the attribute's type."""
    if vtype is ValueType.DATA:
        if isinstance(value, (bytes, bytearray)):
            return bytes(value)
        if isinstance(value, str):
            s = value.replace(":", "").replace(" ", "")
            try:
                return bytes.fromhex(s)
            except ValueError:
                raise TypeMismatch(f"cannot read {value!r} as DATA") from None
        raise TypeMismatch(f"cannot read {value!r} as DATA")
    if isinstance(value, str):
        s = value.strip()
        if s.count(".") == 3 and vtype is ValueType.UINT32:
            parts = s.split(".")
            if all(p.isdigit() and 0 <= int(p) <= 255 for p in parts):
                return int.from_bytes(bytes(int(p) for p in parts), "big")
        try:
            value = int(s, 0)
        except ValueError:
            raise TypeMismatch(f"cannot read {value!r} as {vtype.value}") from None
    if not isinstance(value, int):
        raise TypeMismatch(f"cannot read {value!r} as {vtype.value}")
    return value & ((1 << vtype.bits) - 1)


class ActionInstance:
    """A configured node of the action graph.

    Subclasses set NAME/CATEGORY, validate constructor args in _setup,
    and implement handle() (push categories), or enqueue()/pull() for
    MANY_TO_ONE schedulers.
    """

    NAME = "?"
    CATEGORY = Category.ONE_TO_ONE
    PARAM_HELP = ""
    EVENT_NAMES: tuple[str, ...] = ()

    def __init__(self, name: str, args: list[str]):
        self.name = name
        self.args = list(args)
        self.n_in = 1
        self.n_out = 1
        self._attr_specs: dict[str, AttributeSpec] = {}
        self._attr_values: dict[str, object] = {}
        self.packets_in = 0
        self.packets_out = 0
        self.dropped = 0
        self.held = 0
        self._events: list[Event] = []
        self._setup(args)
        if self.CATEGORY is Category.STARTING:
            self.n_in = 0
            self.n_out = 1
        elif self.CATEGORY is Category.ONE_TO_ONE:
            self.n_in = self.n_out = 1
        elif self.CATEGORY is Category.ENDING:
            self.n_in, self.n_out = 1, 0
        elif self.CATEGORY is Category.ONE_TO_MANY:
            self.n_in = 1
            if self.n_out < 2:
                raise ArityMismatch(
                    f"{self.NAME} must fan out to at least 2 ports")
        elif self.CATEGORY is Category.MANY_TO_ONE:
            self.n_out = 1
            if self.n_in < 2:
                raise ArityMismatch(
                    f"{self.NAME} must merge at least 2 ports")

    # subclasses override
    def _setup(self, args: list[str]):
        if args:
            raise ArityMismatch(f"{self.NAME} takes no arguments")

    # ------------------------------------------------------- attributes

    def declare_attr(self, spec: AttributeSpec):
        self._attr_specs[spec.name] = spec
        self._attr_values.setdefault(spec.name, _UNSET)

    @property
    def attribute_specs(self) -> dict[str, AttributeSpec]:
        return dict(self._attr_specs)

    def set_attribute(self, name: str, value, phase: str = "runtime"):
        spec = self._attr_specs.get(name)
        if spec is None:
            raise UnknownAttribute(f"{self.name} has no attribute {name!r}")
        if phase == "runtime" and not spec.runtime_settable:
            raise NotRuntimeSettable(
                f"{self.name}.{name} is config-phase only")
        self._attr_values[name] = _coerce(spec.vtype, value)

    def get_attribute(self, name: str):
        spec = self._attr_specs.get(name)
        if spec is None:
            raise UnknownAttribute(f"{self.name} has no attribute {name!r}")
        value = self._attr_values[name]
        if value is _UNSET:
            raise AttributeUnset(f"{self.name}.{name} was never set")
        return value

    def attr_is_set(self, name: str) -> bool:
        return self._attr_values.get(name, _UNSET) is not _UNSET

    def require_attr(self, name: str):
        return self.get_attribute(name)

    def unset_config_attrs(self) -> list[str]:
        return [s.name for s in self._attr_specs.values()
                if s.config_required and not self.attr_is_set(s.name)]

    # ----------------------------------------------------------- events

    def emit(self, event: str, payload: bytes = b""):
        self._events.append(Event(self.name, event, bytes(payload)))

    def take_events(self) -> list[Event]:
        out, self._events = self._events, []
        return out

    # -------------------------------------------------------- data path

    def handle(self, packet: Packet, in_port: int = 0) -> list[tuple[int, Packet]]:
        """Process one packet; return (egress port, packet) pairs."""
        raise NotImplementedError(self.NAME)

    def take_pending(self) -> list[tuple[int, Packet]]:
        """Packets released outside handle() (e.g. by attribute writes)."""
        return []

    def enqueue(self, port: int, packet: Packet):
        raise NotImplementedError(self.NAME)

    def pull(self) -> Packet | None:
        raise NotImplementedError(self.NAME)

    def queued(self) -> int:
        return 0

    def counters(self) -> dict:
        c = {"in": self.packets_in, "out": self.packets_out,
             "dropped": self.dropped, "held": self.held}
        if self.CATEGORY is Category.MANY_TO_ONE:
            c["queued"] = self.queued()
        return c

    def __repr__(self):
        return f"<{self.NAME} {self.name}>"


class Registry:
    """Name -> action class table used by scripts and the catalog."""

    def __init__(self):
        self._classes: dict[str, type[ActionInstance]] = {}

    def register(self, cls: type[ActionInstance], replace: bool = False):
        if not replace and cls.NAME in self._classes:
            raise UnknownClass(f"class {cls.NAME!r} already registered")
        self._classes[cls.NAME] = cls
        return cls

    def get(self, name: str) -> type[ActionInstance]:
        try:
            return self._classes[name]
        except KeyError:
            raise UnknownClass(f"no action class {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._classes

    def names(self) -> list[str]:
        return sorted(self._classes)

    def instantiate(self, class_name: str, instance_name: str,
                    args: list[str]) -> ActionInstance:
        return self.get(class_name)(instance_name, args)

    def catalog(self) -> dict:
        out = {}
        for name in self.names():
            cls = self._classes[name]
            out[name] = {
                "category": cls.CATEGORY.value,
                "params": cls.PARAM_HELP,
                "events": list(cls.EVENT_NAMES),
                "doc": (cls.__doc__ or "").strip().splitlines()[0] if cls.__doc__ else "",
            }
        return out
