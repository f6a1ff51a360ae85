"""Many-to-one schedulers: strict priority and weighted round robin.

Both keep one bounded-less queue per ingress port; pulls drain per the
discipline and return None when everything is empty.
"""

from __future__ import annotations

from collections import deque

from ..errors import ArityMismatch
from ..packet import Packet
from .base import ActionInstance, Category


class _QueueScheduler(ActionInstance):
    CATEGORY = Category.MANY_TO_ONE

    def _init_queues(self, n: int):
        self.n_in = n
        self.queues: list[deque[Packet]] = [deque() for _ in range(n)]

    def enqueue(self, port: int, packet: Packet):
        self.packets_in += 1
        self.queues[port].append(packet)

    def queued(self) -> int:
        return sum(len(q) for q in self.queues)


class SpScheduler(ActionInstance):
    """Strict priority: always drains the lowest-numbered nonempty port."""

    NAME = "Sp"
    CATEGORY = Category.MANY_TO_ONE
    PARAM_HELP = "(ports)"

    def _setup(self, args):
        if len(args) != 1:
            raise ArityMismatch("Sp takes the ingress port count")
        n = int(args[0], 0)
        _QueueScheduler._init_queues(self, n)

    enqueue = _QueueScheduler.enqueue
    queued = _QueueScheduler.queued

    def pull(self) -> Packet | None:
        for q in self.queues:
            if q:
                self.packets_out += 1
                return q.popleft()
        return None


class WrrScheduler(ActionInstance):
    """Weighted round robin: each round grants port i up to weight_i
    pulls in ascending port order, skipping empty queues; round state
    persists across pulls."""

    NAME = "Wrr"
    CATEGORY = Category.MANY_TO_ONE
    PARAM_HELP = "(weight, ...)"

    def _setup(self, args):
        if len(args) < 2:
            raise ArityMismatch("Wrr takes one weight per ingress port")
        self.weights = []
        for arg in args:
            w = int(arg, 0)
            if w < 1:
                raise ArityMismatch("weights must be positive")
            self.weights.append(w)
        _QueueScheduler._init_queues(self, len(self.weights))
        self._port = 0
        self._credit = self.weights[0]

    enqueue = _QueueScheduler.enqueue
    queued = _QueueScheduler.queued

    def _advance(self):
        self._port = (self._port + 1) % self.n_in
        self._credit = self.weights[self._port]

    def pull(self) -> Packet | None:
        if self.queued() == 0:
            return None
        # at most one full cycle of advances finds a servable port
        for _ in range(self.n_in + 1):
            if self._credit > 0 and self.queues[self._port]:
                self._credit -= 1
                self.packets_out += 1
                return self.queues[self._port].popleft()
            self._advance()
        return None
