"""Simulated wireless sensor: ID card, functions, radio port, energy ledger.

A sensor only ever interacts with the rest of the application by
broadcasting messages through the simulated radio; it never sees a
procedure call. Every action it performs carries a fixed integer energy
cost, and a node whose battery reaches zero is Absent: it receives and
emits nothing for the remainder of the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .connector import BROADCAST_ID, CommandPayload, Message, rid_param, split_rid
from .errors import CodecError, UnknownFunction
from .events import QoSEvent, QoSKind
from .flows import FlowKind, FlowSpec, TemporalUnit, stamp

DEFAULT_STATE_PERIOD = 25


@dataclass
class IdCard:
    """Hardware identity: processor, memories, battery and OS label."""

    processor_mhz: int
    measure_memory_kb: int
    system_memory_kb: int
    battery_units: int
    os_name: str


@dataclass(frozen=True)
class EnergyCosts:
    """Abstract energy quanta charged per event."""

    sample: int = 2
    tx: int = 3
    rx: int = 1
    idle: int = 0


@dataclass(frozen=True)
class SensorFunction:
    """One measuring capability and the flow its units travel on."""

    function_id: str
    kind: str
    sample_period: int
    flow: FlowSpec

    def __post_init__(self):
        if self.sample_period < 1:
            raise ValueError(f"sample period must be >= 1, got {self.sample_period}")


class SensorNode:
    """One simulated sensor node with its radio port and relay table."""

    def __init__(
        self,
        node_id: int,
        id_card: IdCard,
        functions: list[SensorFunction],
        position: tuple[float, float],
        radio_range: float,
        *,
        label: str | None = None,
        costs: EnergyCosts = EnergyCosts(),
        state_period: int = DEFAULT_STATE_PERIOD,
        send: Callable[[Message], None] | None = None,
        tracer=None,
        qos_sink: Callable[[QoSEvent], None] | None = None,
        on_command: Callable[["SensorNode", str, tuple[bytes, ...], int], None] | None = None,
    ):
        if not functions:
            raise ValueError(f"sensor {node_id} declares no functions")
        if radio_range <= 0:
            raise ValueError(f"sensor {node_id} has non-positive radio range")
        self.node_id = node_id
        self.id_card = id_card
        self.functions = {fn.function_id: fn for fn in functions}
        self.function_order = [fn.function_id for fn in functions]
        self.position = position
        self.radio_range = radio_range
        self.label = label or str(node_id)
        self.costs = costs
        self.state_period = state_period
        self.send = send
        self.tracer = tracer
        self.qos_sink = qos_sink
        self.on_command = on_command
        self.relay_table: dict[int, int] = {}
        self.cu_station: int | None = None
        self.sampling = False
        self.initial_battery = id_card.battery_units
        self.spent: dict[str, int] = {"sample": 0, "tx": 0, "rx": 0}
        self._buffered: list[TemporalUnit] = []
        self._memory_used = 0
        self._first_state_sent = False

    # -- state ---------------------------------------------------------

    @property
    def battery(self) -> int:
        return self.id_card.battery_units

    @property
    def absent(self) -> bool:
        return self.id_card.battery_units == 0

    @property
    def alive(self) -> bool:
        return not self.absent

    @property
    def memory_capacity(self) -> int:
        return self.id_card.measure_memory_kb * 1024

    @property
    def free_memory(self) -> int:
        return self.memory_capacity - self._memory_used

    def fail(self) -> None:
        self.id_card.battery_units = 0

    def _spend(self, what: str, cost: int) -> bool:
        """Charge an event; refuse (and skip the event) if unaffordable."""
        if self.absent or cost > self.id_card.battery_units:
            return False
        self.id_card.battery_units -= cost
        self.spent[what] += cost
        return True

    def _trace(self, now: int, kind: str, *fields: tuple[str, object]) -> None:
        if self.tracer is not None:
            self.tracer.emit(now, kind, ("node", self.label), *fields)

    # -- measuring -----------------------------------------------------

    def sample(self, function_id: str, now: int) -> TemporalUnit | None:
        """Take one measure; None when the battery cannot support it."""
        fn = self.functions.get(function_id)
        if fn is None:
            raise UnknownFunction(f"sensor {self.label} has no function {function_id!r}")
        if now % fn.sample_period != 0:
            raise ValueError(
                f"sample at t={now} is not on the period-{fn.sample_period} grid"
            )
        if not self._spend("sample", self.costs.sample):
            return None
        samples = f"{fn.kind}:{now}".encode("ascii")
        tu = stamp(samples, now, fn.flow.flow_id)
        self._buffer(tu, now)
        self._trace(now, "SAMPLE", ("function", function_id), ("ts", now),
                    ("bytes", len(samples)))
        return tu

    def inject_reading(self, function_id: str, payload: bytes, now: int) -> TemporalUnit | None:
        """Out-of-schedule measure forced by an external stimulus."""
        fn = self.functions.get(function_id)
        if fn is None:
            raise UnknownFunction(f"sensor {self.label} has no function {function_id!r}")
        if not self._spend("sample", self.costs.sample):
            return None
        tu = stamp(payload, now, fn.flow.flow_id)
        self._buffer(tu, now)
        self._trace(now, "STIMULUS", ("function", function_id), ("ts", now),
                    ("payload", payload))
        return tu

    def _buffer(self, tu: TemporalUnit, now: int) -> None:
        # Measure memory holds units until they are transmitted; when it
        # fills up the oldest unit is evicted.
        while self._buffered and self._memory_used + len(tu.samples) > self.memory_capacity:
            evicted = self._buffered.pop(0)
            self._memory_used -= len(evicted.samples)
            self._trace(now, "EVICT", ("flow", evicted.flow_id), ("ts", evicted.timestamp))
            if self.qos_sink is not None:
                self.qos_sink(
                    QoSEvent(QoSKind.MEMORY_FULL, self.label, now,
                             (("dropped_ts", evicted.timestamp),))
                )
        self._buffered.append(tu)
        self._memory_used += len(tu.samples)

    def transmit_pending(self, now: int) -> int:
        """Send buffered units toward the externalized CU; returns count sent."""
        if self.cu_station is None:
            return 0
        sent = 0
        while self._buffered and self.costs.tx <= self.id_card.battery_units:
            tu = self._buffered[0]
            message = Message(
                kind=FlowKind.DATA,
                source=self.node_id,
                final_dest=self.cu_station,
                next_hop=self.relay_table.get(self.cu_station, self.cu_station),
                timestamp=tu.timestamp,
                payload=tu.samples,
            )
            if not self._spend("tx", self.costs.tx):
                break
            self._buffered.pop(0)
            self._memory_used -= len(tu.samples)
            self._emit(message, now)
            sent += 1
        return sent

    # -- radio ---------------------------------------------------------

    def on_message(self, msg: Message, now: int) -> str:
        """React to one delivered radio message; returns the action taken."""
        if self.absent:
            return "absent"
        addressed = (
            msg.final_dest == self.node_id
            or msg.next_hop == self.node_id
            or msg.final_dest == BROADCAST_ID
        )
        if not addressed:
            return "ignored"
        if not self._spend("rx", self.costs.rx):
            return "no-battery"
        self._trace(now, "RX", ("kind", msg.kind.name.lower()), ("source", msg.source))
        if msg.final_dest == self.node_id or msg.final_dest == BROADCAST_ID:
            if msg.kind is FlowKind.COMMAND:
                return self._execute_command(msg, now)
            return "consumed"
        next_hop = self.relay_table.get(msg.final_dest)
        if next_hop is None:
            self._trace(now, "DROP", ("reason", "unroutable"), ("dest", msg.final_dest))
            return "unroutable"
        relayed = Message(
            kind=msg.kind,
            source=msg.source,
            final_dest=msg.final_dest,
            next_hop=next_hop,
            timestamp=msg.timestamp,
            payload=msg.payload,
        )
        if not self._spend("tx", self.costs.tx):
            return "no-battery"
        self._trace(now, "RELAY", ("dest", msg.final_dest), ("next", next_hop),
                    ("bytes", len(msg.payload)))
        if self.send is not None:
            self.send(relayed)
        return "relayed"

    def _execute_command(self, msg: Message, now: int) -> str:
        try:
            payload = CommandPayload.decode(msg.payload)
        except CodecError:
            self._trace(now, "DROP", ("reason", "bad command payload"))
            return "bad-command"
        params, request_id = split_rid(payload.params)
        name = payload.name
        result: list[bytes] = [b"ok"]
        if name == "start":
            self.sampling = True
        elif name == "stop":
            self.sampling = False
        elif name == "init":
            self.sampling = False
            self._buffered.clear()
            self._memory_used = 0
        elif name == "ping":
            pass
        else:
            result = [b"unknown"]
        self._trace(now, "COMMAND", ("name", name))
        if self.on_command is not None:
            self.on_command(self, name, params, now)
        reply_params = list(result)
        if request_id is not None:
            reply_params.append(rid_param(request_id))
        self._send_state(
            CommandPayload(name, tuple(reply_params)), msg.source, now
        )
        return f"command:{name}"

    # -- reporting -----------------------------------------------------

    def report_state(self, now: int) -> Message | None:
        """Periodic battery/memory/lifecycle report to the externalized CU."""
        if self.absent or self.cu_station is None:
            return None
        params = [
            str(self.battery).encode("ascii"),
            str(self.free_memory).encode("ascii"),
            (b"sampling" if self.sampling else b"idle"),
        ]
        if not self._first_state_sent:
            card = self.id_card
            params.extend(
                [
                    str(card.processor_mhz).encode("ascii"),
                    str(card.measure_memory_kb).encode("ascii"),
                    str(card.system_memory_kb).encode("ascii"),
                    card.os_name.encode("utf-8"),
                ]
            )
        message = self._send_state(
            CommandPayload("state", tuple(params)), self.cu_station, now
        )
        if message is not None:
            self._first_state_sent = True
        return message

    def emit_beacon(self, now: int) -> Message | None:
        """Presence heartbeat toward the externalized CU."""
        if self.absent or self.cu_station is None:
            return None
        return self._send_state(CommandPayload("beacon"), self.cu_station, now)

    def _send_state(self, payload: CommandPayload, dest: int, now: int) -> Message | None:
        message = Message(
            kind=FlowKind.STATE,
            source=self.node_id,
            final_dest=dest,
            next_hop=self.relay_table.get(dest, dest),
            timestamp=now,
            payload=payload.encode(),
        )
        if not self._spend("tx", self.costs.tx):
            return None
        self._emit(message, now)
        return message

    def _emit(self, message: Message, now: int) -> None:
        self._trace(
            now,
            "TX",
            ("kind", message.kind.name.lower()),
            ("dest", message.final_dest),
            ("next", message.next_hop),
            ("bytes", len(message.payload)),
        )
        if self.send is not None:
            self.send(message)
