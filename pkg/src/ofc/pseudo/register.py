"""Binding checked programs into the action registry."""

from __future__ import annotations

from ..actions.base import ActionInstance, AttributeSpec, Category, Registry
from ..errors import ArityMismatch, CategoryUnsupported
from ..packet import Packet
from .check import CheckedProgram
from .interp import interpret


def register_user_action(checked: CheckedProgram, registry: Registry,
                         name: str | None = None,
                         category: Category = Category.ONE_TO_ONE,
                         replace: bool = True) -> type[ActionInstance]:
    """Wrap a checked program as an action class and register it.

    Programs consume and produce exactly one packet, so only
    ONE_TO_ONE is supported.
    """
    if category is not Category.ONE_TO_ONE:
        raise CategoryUnsupported(
            f"programs are ONE_TO_ONE, not {category.value}")
    action_name = name or checked.name
    attr_decls = checked.attr_decls

    class UserAction(ActionInstance):
        NAME = action_name
        CATEGORY = Category.ONE_TO_ONE
        PARAM_HELP = "()"
        EVENT_NAMES = checked.event_names
        CHECKED = checked

        def _setup(self, args):
            if args:
                raise ArityMismatch(f"{action_name} takes no arguments")
            for decl in attr_decls.values():
                self.declare_attr(AttributeSpec(decl.name, decl.vtype))

        def handle(self, packet: Packet, in_port: int = 0):
            self.packets_in += 1
            attrs = {n: self._attr_values[n] for n in attr_decls
                     if self.attr_is_set(n)}
            result = interpret(self.CHECKED, packet, attrs)
            for attr, value in result.attr_updates.items():
                self._attr_values[attr] = value
            for event, payload in result.events:
                self.emit(event, payload)
            self.packets_out += 1
            return [(0, packet)]

    UserAction.__name__ = action_name
    UserAction.__qualname__ = action_name
    registry.register(UserAction, replace=replace)
    return UserAction
