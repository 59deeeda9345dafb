"""Elementary Processor: the container around a business component.

An EP owns an Input Unit that reassembles synchronous slices from its
incoming flows, an Output Unit that hands produced and pass-through units
downstream, and a Control Unit that classifies flows, consumes commands
and reports state. The hosted entity is either a business component
(software) or a sensor proxy whose lifecycle hooks talk to the sensor
through a connector.
"""

from __future__ import annotations

from enum import Enum
from typing import Callable, Iterable

from .conduit import SliceBuffer
from .connector import CommandPayload, Connector
from .errors import CodecError, IllegalTransition
from .events import QoSEvent, QoSKind
from .flows import FlowKind, FlowSpec, TemporalUnit


class EpState(Enum):
    CREATED = "created"
    INITIALIZED = "initialized"
    RUNNING = "running"
    STOPPED = "stopped"


class LifecycleCommand(Enum):
    INIT = "init"
    START = "start"
    STOP = "stop"


class Route(Enum):
    TO_BC = "to_bc"
    PASS_THROUGH = "pass_through"
    TO_CU = "to_cu"
    TO_PLATFORM = "to_platform"


# (command, current state) -> next state
_TRANSITIONS: dict[tuple[LifecycleCommand, EpState], EpState] = {
    (LifecycleCommand.INIT, EpState.CREATED): EpState.INITIALIZED,
    (LifecycleCommand.START, EpState.INITIALIZED): EpState.RUNNING,
    (LifecycleCommand.START, EpState.STOPPED): EpState.RUNNING,
    (LifecycleCommand.STOP, EpState.RUNNING): EpState.STOPPED,
}


class BusinessComponent:
    """Base for software components: data driven, slice granular.

    Subclasses override ``process``; it runs once per complete input
    slice, receives the consumed units and must stamp every output with
    the given anchor timestamp.
    """

    def __init__(self, bc_id: str, consumes: Iterable[int], produces: Iterable[FlowSpec]):
        self.bc_id = bc_id
        self.consumes = frozenset(consumes)
        self.produces = tuple(produces)
        self.init_count = 0
        self.start_count = 0
        self.stop_count = 0
        self._command_requests: list[tuple[str, str, tuple[bytes, ...]]] = []

    def on_init(self, now: int) -> None:
        pass

    def on_start(self, now: int) -> None:
        pass

    def on_stop(self, now: int) -> None:
        pass

    def process(self, tus: list[TemporalUnit], anchor_ts: int) -> list[TemporalUnit]:
        return []

    def request_command(self, target: str, name: str,
                        params: tuple[bytes, ...] = ()) -> None:
        """Queue a platform command; the hosting EP forwards it via its CU."""
        self._command_requests.append((target, name, params))

    def drain_command_requests(self) -> list[tuple[str, str, tuple[bytes, ...]]]:
        drained, self._command_requests = self._command_requests, []
        return drained


class SensorProxy:
    """Hosted stand-in for a remote sensor; stateless by construction.

    Start/stop hooks become radio commands through the connector; the
    proxy consumes nothing, so every incoming unit passes through.
    """

    def __init__(self, sensor_label: str, produces: Iterable[FlowSpec],
                 connector: Connector | None = None):
        self.bc_id = f"proxy:{sensor_label}"
        self.sensor_label = sensor_label
        self.consumes: frozenset[int] = frozenset()
        self.produces = tuple(produces)
        self.connector = connector
        self.init_count = 0
        self.start_count = 0
        self.stop_count = 0

    def on_init(self, now: int) -> None:
        # Local container setup only; the sensor itself is driven by
        # start/stop so init does not cost radio traffic.
        pass

    def on_start(self, now: int) -> None:
        if self.connector is not None:
            self.connector.call("start", [], now)

    def on_stop(self, now: int) -> None:
        if self.connector is not None:
            self.connector.call("stop", [], now)

    def process(self, tus: list[TemporalUnit], anchor_ts: int) -> list[TemporalUnit]:
        return []


class ControlUnit:
    """Supervisory element of one EP: routing, commands in, state out."""

    def __init__(self, ep_id: str):
        self.ep_id = ep_id
        self.command_inbox: list[TemporalUnit] = []
        self.state_inbox: list[TemporalUnit] = []
        self.state_outbox: list[TemporalUnit] = []
        self.command_requests: list[tuple[str, str, tuple[bytes, ...]]] = []
        self.consumes: frozenset[int] = frozenset()
        self.on_command_request: Callable[[str, str, tuple[bytes, ...], int], None] | None = None
        self.forward_state: Callable[[TemporalUnit], None] | None = None

    def classify(self, flow: FlowSpec) -> Route:
        """Where a flow goes inside the EP, by its nature."""
        if flow.kind is FlowKind.COMMAND:
            return Route.TO_CU
        if flow.kind is FlowKind.STATE:
            return Route.TO_PLATFORM
        if flow.flow_id in self.consumes:
            return Route.TO_BC
        return Route.PASS_THROUGH

    def request_command(self, target: str, name: str,
                        params: tuple[bytes, ...], now: int) -> None:
        """Hosted component asks the platform to command another component."""
        self.command_requests.append((target, name, params))
        if self.on_command_request is not None:
            self.on_command_request(target, name, params, now)


class ElementaryProcessor:
    """Container running one hosted entity between its IU and OU."""

    def __init__(
        self,
        ep_id: str,
        station_id: int,
        hosted: BusinessComponent | SensorProxy,
        input_bundle: list[FlowSpec],
        *,
        state_flow: FlowSpec | None = None,
        slice_timeout: int | None = None,
        scheduler=None,
        output_sink: Callable[[TemporalUnit], None] | None = None,
        qos_sink: Callable[[QoSEvent], None] | None = None,
        tracer=None,
    ):
        self.ep_id = ep_id
        self.station_id = station_id
        self.hosted = hosted
        self.state = EpState.CREATED
        self.state_flow = state_flow
        self.scheduler = scheduler
        self.output_sink = output_sink
        self.qos_sink = qos_sink
        self.tracer = tracer
        self.cu = ControlUnit(ep_id)
        self.cu.consumes = hosted.consumes
        self.input_bundle = [
            spec for spec in input_bundle if spec.kind is FlowKind.DATA
        ]
        self._specs = {spec.flow_id: spec for spec in input_bundle}
        self.iu: SliceBuffer | None = (
            SliceBuffer(self.input_bundle, slice_timeout=slice_timeout,
                        label=f"{ep_id}.iu")
            if self.input_bundle
            else None
        )
        # Slices that arrived while not Running wait here with a deadline.
        self._held: list[tuple[int, list[TemporalUnit]]] = []
        self._reported_abandons = 0
        self._wakeups: set[int] = set()
        self.processed_slices = 0

    # -- lifecycle -----------------------------------------------------

    def lifecycle(self, command: LifecycleCommand, now: int) -> EpState:
        """Apply a lifecycle command; emits a state report on success."""
        target = _TRANSITIONS.get((command, self.state))
        if target is None:
            raise IllegalTransition(
                f"{self.ep_id}: {command.value} not legal from {self.state.value}"
            )
        if command is LifecycleCommand.INIT:
            self.hosted.init_count += 1
            self.hosted.on_init(now)
        elif command is LifecycleCommand.START:
            self.hosted.start_count += 1
            self.hosted.on_start(now)
        else:
            self.hosted.stop_count += 1
            self.hosted.on_stop(now)
        self.state = target
        if self.tracer is not None:
            self.tracer.emit(now, "LIFECYCLE", ("ep", self.ep_id),
                             ("state", target.value))
        self._emit_state(now)
        if target is EpState.RUNNING:
            self._release_held(now)
        return self.state

    def _emit_state(self, now: int) -> None:
        if self.state_flow is None:
            return
        tu = TemporalUnit(self.state_flow.flow_id, now, self.state.value.encode())
        self.cu.state_outbox.append(tu)
        if self.cu.forward_state is not None:
            self.cu.forward_state(tu)

    # -- ingress -------------------------------------------------------

    def receive(self, tu: TemporalUnit, now: int) -> None:
        """IU entry point for one unit of any kind."""
        spec = self._specs.get(tu.flow_id)
        if spec is not None and spec.kind is FlowKind.COMMAND:
            self.deliver_command(tu, now)
            return
        if spec is not None and spec.kind is FlowKind.STATE:
            self.cu.state_inbox.append(tu)
            if self.cu.forward_state is not None:
                self.cu.forward_state(tu)
            return
        if self.iu is None:
            return
        self.iu.push(tu, now)
        self._after_iu(now)

    def receive_state(self, tu: TemporalUnit) -> None:
        """State units (sensor reports, responses) land at the CU."""
        self.cu.state_inbox.append(tu)
        if self.cu.forward_state is not None:
            self.cu.forward_state(tu)

    def deliver_command(self, tu: TemporalUnit, now: int) -> None:
        """Command units terminate at the CU; the BC never sees them."""
        self.cu.command_inbox.append(tu)
        try:
            payload = CommandPayload.decode(tu.samples)
        except CodecError:
            return
        mapping = {
            "init": LifecycleCommand.INIT,
            "start": LifecycleCommand.START,
            "stop": LifecycleCommand.STOP,
        }
        command = mapping.get(payload.name)
        if command is not None:
            self.lifecycle(command, now)

    def check_deadlines(self, now: int) -> None:
        if self.iu is not None:
            self.iu.check_deadlines(now)
            self._after_iu(now)
        self._expire_held(now)

    def _after_iu(self, now: int) -> None:
        assert self.iu is not None
        self._forward_abandons()
        if self.scheduler is not None:
            wakeup = self.iu.next_wakeup()
            if wakeup is not None and wakeup not in self._wakeups:
                self._wakeups.add(wakeup)
                self.scheduler.call_at(
                    wakeup, lambda: self.check_deadlines(self.scheduler.now)
                )
        for tus in self._ready_slices():
            self.on_slice(tus, now)

    def _ready_slices(self) -> list[list[TemporalUnit]]:
        assert self.iu is not None
        slices: list[list[TemporalUnit]] = []
        for tu in self.iu.take_ready():
            index = tu.timestamp // self.iu.anchor
            if slices and slices[-1][0].timestamp // self.iu.anchor == index:
                slices[-1].append(tu)
            else:
                slices.append([tu])
        return slices

    def _forward_abandons(self) -> None:
        assert self.iu is not None
        if self.qos_sink is None:
            self._reported_abandons = len(self.iu.abandoned)
            return
        while self._reported_abandons < len(self.iu.abandoned):
            self.qos_sink(self.iu.abandoned[self._reported_abandons])
            self._reported_abandons += 1

    # -- slice processing ----------------------------------------------

    def on_slice(self, tus: list[TemporalUnit], now: int) -> None:
        """Process one complete input slice, or hold it until Running."""
        if self.state is not EpState.RUNNING:
            timeout = self.iu.slice_timeout if self.iu is not None else 0
            self._held.append((now + timeout, list(tus)))
            if self.scheduler is not None:
                self.scheduler.call_at(
                    now + timeout, lambda: self.check_deadlines(self.scheduler.now)
                )
            return
        self._process_slice(tus, now)

    def _release_held(self, now: int) -> None:
        held, self._held = self._held, []
        for deadline, tus in held:
            if deadline <= now:
                self._abandon_held(tus, now)
            else:
                self._process_slice(tus, now)

    def _expire_held(self, now: int) -> None:
        keep: list[tuple[int, list[TemporalUnit]]] = []
        for deadline, tus in self._held:
            if deadline <= now:
                self._abandon_held(tus, now)
            else:
                keep.append((deadline, tus))
        self._held = keep

    def _abandon_held(self, tus: list[TemporalUnit], now: int) -> None:
        if self.qos_sink is not None:
            anchor = self.iu.anchor if self.iu is not None else 1
            self.qos_sink(
                QoSEvent(
                    QoSKind.SLICE_ABANDONED,
                    self.ep_id,
                    now,
                    (("slice", tus[0].timestamp // anchor),
                     ("missing", ()), ("held", True)),
                )
            )

    def _process_slice(self, tus: list[TemporalUnit], now: int) -> None:
        assert self.iu is not None
        anchor_ts = (min(tu.timestamp for tu in tus) // self.iu.anchor) * self.iu.anchor
        to_bc: list[TemporalUnit] = []
        out: list[TemporalUnit] = []
        for tu in tus:
            route = self.cu.classify(self._specs[tu.flow_id])
            if route is Route.TO_BC:
                to_bc.append(tu)
            elif route is Route.PASS_THROUGH:
                out.append(tu)  # byte-identical, timestamp untouched
        if to_bc:
            produced = self.hosted.process(to_bc, anchor_ts)
            produced_ids = {spec.flow_id for spec in self.hosted.produces}
            for tu in produced:
                if tu.flow_id not in produced_ids:
                    raise ValueError(
                        f"{self.ep_id}: BC emitted unit on undeclared flow {tu.flow_id}"
                    )
                if tu.timestamp != anchor_ts:
                    raise ValueError(
                        f"{self.ep_id}: BC output stamped {tu.timestamp}, "
                        f"slice anchor is {anchor_ts}"
                    )
            out.extend(produced)
            if isinstance(self.hosted, BusinessComponent):
                for target, name, params in self.hosted.drain_command_requests():
                    self.cu.request_command(target, name, params, now)
        out.sort(key=lambda tu: (tu.timestamp, tu.flow_id))
        self.processed_slices += 1
        if self.output_sink is not None:
            for tu in out:
                self.output_sink(tu)
