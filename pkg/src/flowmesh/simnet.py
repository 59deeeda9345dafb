"""Deterministic discrete-event core: virtual clock, scheduler, radio.

Events execute in (time, sequence) order; the sequence number is assigned
when the event is scheduled, so two runs that schedule identically execute
identically. Radio loss uses a single seeded generator consumed in
event-execution order, with receivers visited in ascending id order.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Callable

from .connector import Message
from .errors import UnknownNode
from .events import QoSEvent, QoSKind


@dataclass
class RadioModel:
    """Per-hop latency plus an independent loss draw per receiver."""

    latency: int = 1
    loss_p: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.loss_p <= 1.0:
            raise ValueError(f"loss probability {self.loss_p} outside [0, 1]")
        self._rng = random.Random(self.seed)

    def draw_loss(self) -> bool:
        if self.loss_p == 0.0:
            return False
        if self.loss_p == 1.0:
            return True
        return self._rng.random() < self.loss_p


@dataclass(order=True)
class _Event:
    time: int
    seq: int
    fn: Callable[[], None] = field(compare=False)
    label: str = field(compare=False, default="")


class Network:
    """The sole execution driver; entities live on it and talk through it.

    Registered entities are duck-typed: they expose ``position``,
    ``radio_range``, ``alive`` and ``label``. Message delivery calls the
    handler registered alongside the entity.
    """

    def __init__(
        self,
        radio: RadioModel | None = None,
        *,
        tracer=None,
        qos_sink: Callable[[QoSEvent], None] | None = None,
        keep_event_log: bool = False,
    ):
        self.radio = radio if radio is not None else RadioModel()
        self.tracer = tracer
        self.qos_sink = qos_sink
        self.now = 0
        self.executed = 0
        self._seq = 0
        self._heap: list[_Event] = []
        self.entities: dict[int, object] = {}
        self._handlers: dict[int, Callable[[Message, int], None]] = {}
        self.event_log: list[tuple[int, int, str]] | None = [] if keep_event_log else None

    # -- membership ------------------------------------------------------

    def add(self, entity_id: int, entity: object,
            handler: Callable[[Message, int], None] | None = None) -> None:
        if entity_id in self.entities:
            raise ValueError(f"entity id {entity_id} already registered")
        self.entities[entity_id] = entity
        if handler is not None:
            self._handlers[entity_id] = handler

    # -- scheduling ------------------------------------------------------

    def call_at(self, time: int, fn: Callable[[], None], label: str = "timer") -> None:
        if time < self.now:
            raise ValueError(f"cannot schedule at {time}, clock is at {self.now}")
        heapq.heappush(self._heap, _Event(time, self._seq, fn, label))
        self._seq += 1

    def advance_until(self, t: int) -> int:
        """Run every event due at or before t; clock lands exactly on t."""
        if t < self.now:
            raise ValueError(f"cannot rewind clock from {self.now} to {t}")
        count = 0
        while self._heap and self._heap[0].time <= t:
            event = heapq.heappop(self._heap)
            self.now = event.time
            count += 1
            self.executed += 1
            if self.event_log is not None:
                self.event_log.append((event.time, event.seq, event.label))
            event.fn()
        self.now = t
        return count

    # -- radio -----------------------------------------------------------

    def broadcast(self, from_id: int, msg: Message, now: int | None = None) -> None:
        """Schedule delivery to every live in-range entity except the sender."""
        sender = self.entities.get(from_id)
        if sender is None:
            raise UnknownNode(f"broadcast from unknown entity {from_id}")
        if not sender.alive:
            return
        if now is None:
            now = self.now
        sx, sy = sender.position
        reach2 = sender.radio_range * sender.radio_range
        for entity_id in sorted(self.entities):
            if entity_id == from_id:
                continue
            entity = self.entities[entity_id]
            if not entity.alive:
                continue
            ex, ey = entity.position
            dist2 = (ex - sx) ** 2 + (ey - sy) ** 2
            if dist2 > reach2:
                continue
            if self.radio.draw_loss():
                if self.tracer is not None:
                    self.tracer.emit(now, "LOSS", ("from", sender.label),
                                     ("to", entity.label))
                continue
            handler = self._handlers.get(entity_id)
            if handler is None:
                continue
            when = now + self.radio.latency
            self.call_at(
                when,
                lambda h=handler, m=msg, w=when: h(m, w),
                label=f"deliver:{from_id}->{entity_id}",
            )

    # -- mobility ----------------------------------------------------------

    def move(self, node_id: int, new_pos: tuple[float, float],
             now: int | None = None) -> None:
        entity = self.entities.get(node_id)
        if entity is None:
            raise UnknownNode(f"move of unknown entity {node_id}")
        if now is None:
            now = self.now
        entity.position = new_pos
        if self.tracer is not None:
            self.tracer.emit(now, "MOVE", ("node", entity.label),
                             ("x", new_pos[0]), ("y", new_pos[1]))
        if self.qos_sink is not None:
            self.qos_sink(
                QoSEvent(QoSKind.NODE_MOVED, entity.label, now,
                         (("x", new_pos[0]), ("y", new_pos[1])))
            )
