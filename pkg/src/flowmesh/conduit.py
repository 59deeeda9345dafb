"""Conduits: slice-ordered transport of flow bundles between ports.

A conduit buffers pushed temporal units per synchronous slice and releases
a slice only when it is complete or when its deadline passes. Delivery
order is (slice, timestamp, flow_id) ascending, and all units of slice k
come out before any unit of slice k+1. Registered datatype transformations
run in the conduit's control unit at delivery time and never touch the
timestamp.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol

from .errors import (
    DirectionMismatch,
    DuplicateTransform,
    UnknownFlow,
    UnknownTransform,
)
from .events import QoSEvent, QoSKind
from .flows import (
    FlowSpec,
    TemporalUnit,
    anchor_period,
    expected_slice_counts,
    validate_bundle,
)

# A slice missing units this long after its interval ends is abandoned.
DEFAULT_TIMEOUT_FACTOR = 10


class PortDirection(Enum):
    INPUT = "input"
    OUTPUT = "output"


@dataclass(frozen=True)
class Port:
    """Connection point of an EP unit; accepts a fixed set of flows."""

    owner_id: str
    direction: PortDirection
    flow_ids: frozenset[int]


class Scheduler(Protocol):
    """What a conduit needs from the simulation core to time out slices."""

    @property
    def now(self) -> int: ...

    def call_at(self, time: int, fn: Callable[[], None]) -> None: ...


Transform = Callable[[bytes], bytes]


class ConduitControlUnit:
    """Holds the datatype transformations a conduit may apply in transit."""

    def __init__(self):
        self._transforms: dict[tuple[int, int], Transform] = {}

    def register_transform(self, from_tag: int, to_tag: int, fn: Transform) -> None:
        key = (from_tag, to_tag)
        if key in self._transforms:
            raise DuplicateTransform(f"transform {from_tag}->{to_tag} already registered")
        self._transforms[key] = fn

    def transform_for(self, from_tag: int, to_tag: int) -> Transform | None:
        """Transformation to apply for a tag pair; None means pass as-is."""
        fn = self._transforms.get((from_tag, to_tag))
        if fn is not None:
            return fn
        if from_tag == to_tag:
            return None
        raise UnknownTransform(f"no transform registered for {from_tag}->{to_tag}")


class SliceBuffer:
    """Assembles pushed units into complete slices and gates their release.

    The frontier starts at the slice of the first pushed unit; earlier
    slices are considered never produced. An incomplete slice blocks later
    ones until its deadline (slice end + timeout) passes, at which point it
    is abandoned: its units are dropped and every missing (flow, slice)
    pair is reported. An empty gap slice is abandoned only when newer data
    is waiting behind it, so an idle source does not spray events.
    """

    def __init__(
        self,
        bundle: list[FlowSpec],
        *,
        slice_timeout: int | None = None,
        label: str = "",
    ):
        self.anchor = validate_bundle(bundle)
        self.bundle = list(bundle)
        self.label = label
        self.slice_timeout = (
            slice_timeout if slice_timeout is not None else DEFAULT_TIMEOUT_FACTOR * self.anchor
        )
        self._expected = expected_slice_counts(bundle)
        self._pending: dict[int, list[TemporalUnit]] = {}
        self._frontier: int | None = None
        self._ready: list[TemporalUnit] = []
        self._seen_ts = 0
        self.abandoned: list[QoSEvent] = []
        self.pushed = 0
        self.delivered = 0

    def deadline(self, index: int) -> int:
        return (index + 1) * self.anchor + self.slice_timeout

    def slice_index(self, tu: TemporalUnit) -> int:
        return tu.timestamp // self.anchor

    def push(self, tu: TemporalUnit, now: int | None = None) -> None:
        """Buffer one unit; resolution happens at drain or deadline checks."""
        if tu.flow_id not in self._expected:
            raise UnknownFlow(f"flow {tu.flow_id} not in bundle {self.label!r}")
        self.pushed += 1
        self._seen_ts = max(self._seen_ts, tu.timestamp)
        index = self.slice_index(tu)
        if self._frontier is not None and index < self._frontier:
            # Its slice was already resolved; delivering now would break order.
            self._abandon_late(tu, now)
            return
        self._pending.setdefault(index, []).append(tu)

    def check_deadlines(self, now: int) -> None:
        self._seen_ts = max(self._seen_ts, now)
        self.evaluate(now)

    def take_ready(self, upto_slice: int | None = None,
                   now: int | None = None) -> list[TemporalUnit]:
        """Remove and return released units, oldest first."""
        self.evaluate(now)
        if upto_slice is None:
            taken, self._ready = self._ready, []
        else:
            cut = 0
            for tu in self._ready:
                if self.slice_index(tu) > upto_slice:
                    break
                cut += 1
            taken, self._ready = self._ready[:cut], self._ready[cut:]
        self.delivered += len(taken)
        return taken

    def has_ready(self) -> bool:
        return bool(self._ready)

    def next_wakeup(self) -> int | None:
        """Earliest deadline after which the frontier could move, if any."""
        candidate = self._candidate()
        if candidate is None or not self._pending:
            return None
        return self.deadline(candidate)

    def buffered_count(self) -> int:
        return sum(len(tus) for tus in self._pending.values())

    def abandon_all(self, now: int) -> None:
        """Give up every buffered slice, reporting each one."""
        for index in sorted(self._pending):
            self._abandon_slice(index, self._pending[index], now)
            self._frontier = index + 1
        self._pending.clear()

    def _now(self, now: int | None) -> int:
        return self._seen_ts if now is None else max(now, self._seen_ts)

    def _candidate(self) -> int | None:
        # Until the first resolution pins the frontier, the stream origin
        # floats at the lowest buffered slice, so units arriving out of
        # order before anything was delivered are never discarded.
        if self._frontier is not None:
            return self._frontier
        return min(self._pending) if self._pending else None

    def evaluate(self, now: int | None = None) -> None:
        """Resolve slices from the frontier: deliver complete, abandon dead."""
        current = self._now(now)
        while True:
            candidate = self._candidate()
            if candidate is None:
                break
            tus = self._pending.get(candidate)
            if tus is not None and self._counts_match(tus):
                tus.sort(key=lambda tu: (tu.timestamp, tu.flow_id))
                self._ready.extend(tus)
                del self._pending[candidate]
                self._frontier = candidate + 1
            elif self.deadline(candidate) <= current and (
                tus or any(k > candidate for k in self._pending)
            ):
                self._abandon_slice(candidate, tus or [], current)
                self._pending.pop(candidate, None)
                self._frontier = candidate + 1
            else:
                break

    def _counts_match(self, tus: list[TemporalUnit]) -> bool:
        counts: dict[int, int] = {}
        for tu in tus:
            counts[tu.flow_id] = counts.get(tu.flow_id, 0) + 1
        return counts == self._expected

    def _abandon_slice(self, index: int, tus: list[TemporalUnit], now: int) -> None:
        counts: dict[int, int] = {}
        for tu in tus:
            counts[tu.flow_id] = counts.get(tu.flow_id, 0) + 1
        missing = tuple(
            (flow_id, expected - counts.get(flow_id, 0))
            for flow_id, expected in sorted(self._expected.items())
            if expected - counts.get(flow_id, 0) > 0
        )
        self.abandoned.append(
            QoSEvent(
                kind=QoSKind.SLICE_ABANDONED,
                subject=self.label,
                time=now,
                detail=(("slice", index), ("missing", missing)),
            )
        )

    def _abandon_late(self, tu: TemporalUnit, now: int | None) -> None:
        self.abandoned.append(
            QoSEvent(
                kind=QoSKind.SLICE_ABANDONED,
                subject=self.label,
                time=self._now(now),
                detail=(
                    ("slice", self.slice_index(tu)),
                    ("missing", ((tu.flow_id, 1),)),
                    ("late", True),
                ),
            )
        )


class Conduit:
    """Transport for one bundle between an output port and an input port."""

    def __init__(
        self,
        conduit_id: str,
        bundle: list[FlowSpec],
        from_port: Port,
        to_port: Port,
        *,
        cu: ConduitControlUnit | None = None,
        consumer_tags: dict[int, int] | None = None,
        slice_timeout: int | None = None,
        scheduler: Scheduler | None = None,
        qos_sink: Callable[[QoSEvent], None] | None = None,
        on_deliverable: Callable[["Conduit"], None] | None = None,
    ):
        self.conduit_id = conduit_id
        self.bundle = list(bundle)
        self.from_port = from_port
        self.to_port = to_port
        self.cu = cu if cu is not None else ConduitControlUnit()
        self.consumer_tags = dict(consumer_tags or {})
        self.anchor = anchor_period(bundle)
        self.scheduler = scheduler
        self.on_deliverable = on_deliverable
        self._qos_sink = qos_sink
        self._buffer = SliceBuffer(
            bundle, slice_timeout=slice_timeout, label=conduit_id
        )
        self._producer_tags = {spec.flow_id: spec.datatype_tag for spec in bundle}
        self._reported = 0
        self._wakeups: set[int] = set()

    @property
    def slice_timeout(self) -> int:
        return self._buffer.slice_timeout

    @property
    def abandoned(self) -> list[QoSEvent]:
        return self._buffer.abandoned

    def validate_transforms(self) -> None:
        """Fail fast if a flow's tag pair has no registered transformation."""
        for flow_id, from_tag in self._producer_tags.items():
            self.cu.transform_for(from_tag, self.consumer_tags.get(flow_id, from_tag))

    def push(self, tu: TemporalUnit) -> None:
        now = self.scheduler.now if self.scheduler is not None else None
        self._buffer.push(tu, now)
        if self.scheduler is not None or self.on_deliverable is not None:
            # Live wiring wants immediate completion checks; raw conduits
            # defer resolution to drain so arbitrary push orders stay safe.
            self._buffer.evaluate(now)
            self._after_evaluate()

    def check_deadlines(self, now: int | None = None) -> None:
        if now is None and self.scheduler is not None:
            now = self.scheduler.now
        if now is not None:
            self._buffer.check_deadlines(now)
        else:
            self._buffer.evaluate(None)
        self._after_evaluate()

    def drain(self, upto_slice: int | None = None) -> list[TemporalUnit]:
        """Deliverable units in contract order, transformed, removed."""
        now = self.scheduler.now if self.scheduler is not None else None
        out: list[TemporalUnit] = []
        for tu in self._buffer.take_ready(upto_slice, now):
            out.append(self._deliver(tu))
        self._flush_qos()
        return out

    def has_deliverable(self) -> bool:
        return self._buffer.has_ready()

    def buffered_count(self) -> int:
        return self._buffer.buffered_count()

    def abandon_pending(self, now: int) -> None:
        """Drop everything buffered, e.g. when the producer went down."""
        self._buffer.abandon_all(now)
        self._flush_qos()

    def _deliver(self, tu: TemporalUnit) -> TemporalUnit:
        from_tag = self._producer_tags[tu.flow_id]
        to_tag = self.consumer_tags.get(tu.flow_id, from_tag)
        fn = self.cu.transform_for(from_tag, to_tag)
        if fn is None:
            return tu
        return TemporalUnit(tu.flow_id, tu.timestamp, bytes(fn(tu.samples)))

    def _after_evaluate(self) -> None:
        self._flush_qos()
        if self.scheduler is not None:
            wakeup = self._buffer.next_wakeup()
            if wakeup is not None and wakeup not in self._wakeups:
                self._wakeups.add(wakeup)
                self.scheduler.call_at(wakeup, lambda: self.check_deadlines())
        if self._buffer.has_ready() and self.on_deliverable is not None:
            self.on_deliverable(self)

    def _flush_qos(self) -> None:
        if self._qos_sink is None:
            self._reported = len(self._buffer.abandoned)
            return
        while self._reported < len(self._buffer.abandoned):
            self._qos_sink(self._buffer.abandoned[self._reported])
            self._reported += 1


def connect(
    out_port: Port,
    in_port: Port,
    bundle: list[FlowSpec],
    *,
    conduit_id: str | None = None,
    catalog: dict[tuple[int, int], Transform] | None = None,
    consumer_tags: dict[int, int] | None = None,
    slice_timeout: int | None = None,
    scheduler: Scheduler | None = None,
    qos_sink: Callable[[QoSEvent], None] | None = None,
    on_deliverable: Callable[[Conduit], None] | None = None,
) -> Conduit:
    """Create an empty conduit for a bundle between two compatible ports.

    The control unit's registry is populated from the platform-held
    ``catalog`` so every conduit shares one source of transform truth.
    """
    if out_port.direction is not PortDirection.OUTPUT:
        raise DirectionMismatch(f"port of {out_port.owner_id} is not an output port")
    if in_port.direction is not PortDirection.INPUT:
        raise DirectionMismatch(f"port of {in_port.owner_id} is not an input port")
    anchor = validate_bundle(bundle)
    for spec in bundle:
        if spec.flow_id not in out_port.flow_ids:
            raise UnknownFlow(
                f"flow {spec.flow_id} not offered by output port of {out_port.owner_id}"
            )
        if spec.flow_id not in in_port.flow_ids:
            raise UnknownFlow(
                f"flow {spec.flow_id} not accepted by input port of {in_port.owner_id}"
            )
    cu = ConduitControlUnit()
    for (from_tag, to_tag), fn in sorted((catalog or {}).items()):
        cu.register_transform(from_tag, to_tag, fn)
    ident = conduit_id or f"{out_port.owner_id}->{in_port.owner_id}"
    return Conduit(
        ident,
        bundle,
        out_port,
        in_port,
        cu=cu,
        consumer_tags=consumer_tags,
        slice_timeout=slice_timeout,
        scheduler=scheduler,
        qos_sink=qos_sink,
        on_deliverable=on_deliverable,
    )
