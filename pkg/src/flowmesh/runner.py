"""Builds a live system from a scenario and drives it to completion.

The runtime owns all wiring: ids, flow specs, stations, sensors, proxy
EPs with their connectors, conduits, the supervision loop and the timed
script. Everything observable lands in the trace; the run summary is
derived from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .builtins import BUILTIN_TRANSFORMS, make_builtin
from .conduit import Conduit, Port, PortDirection, connect
from .connector import (
    BROADCAST_ID,
    CommandPayload,
    Connector,
    Message,
    decode_station_tu,
    encode_station_tu,
)
from .errors import CodecError, FlowmeshError, NoReachableStation
from .events import QoSEvent, QoSKind
from .flows import FlowKind, FlowSpec, TemporalUnit
from .processor import ElementaryProcessor, EpState, LifecycleCommand, SensorProxy
from .scenario import Scenario
from .sensor import IdCard, SensorFunction, SensorNode
from .simnet import Network, RadioModel
from .supervision import (
    AbandonConduits,
    InstallRelay,
    MarkDown,
    Migrate,
    Registry,
    Station,
    StopEp,
)
from .trace import Tracer

# Flows nobody connects still need a consumer for their spec; their units
# are traced at the producing EP's output unit and go nowhere else.
TRACE_SINK = "trace"


@dataclass
class RunSummary:
    until: int
    seed: int
    executed_events: int
    records: int
    qos: dict[str, int]
    abandoned_slices: int
    relays: int
    errors: int
    final_battery: dict[str, int] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 0 if self.errors == 0 else 1

    def lines(self) -> list[str]:
        out = [
            f"events executed: {self.executed_events}",
            f"trace records: {self.records}",
            f"relay forwards: {self.relays}",
            f"abandoned slices: {self.abandoned_slices}",
        ]
        for kind in sorted(self.qos):
            out.append(f"qos {kind}: {self.qos[kind]}")
        for label in sorted(self.final_battery):
            out.append(f"battery {label}: {self.final_battery[label]}")
        out.append(f"errors: {self.errors}")
        return out


class Runtime:
    """One scenario wired onto one simulated network."""

    def __init__(self, scenario: Scenario, *, seed: int = 0, tracer: Tracer | None = None):
        self.scenario = scenario
        self.seed = seed
        self.tracer = tracer if tracer is not None else Tracer()
        radio = RadioModel(
            latency=scenario.radio.latency, loss_p=scenario.radio.loss, seed=seed
        )
        self.net = Network(radio, tracer=self.tracer, qos_sink=self.handle_qos)
        self.registry = Registry(tracer=self.tracer)

        self.ids: dict[str, int] = {}
        self.labels: dict[int, str] = {}
        self.flow_ids: dict[str, int] = {}
        self.flow_specs: dict[int, FlowSpec] = {}
        self.flow_names: dict[int, str] = {}
        self.flow_producer: dict[int, str] = {}
        self.sensor_by_label: dict[str, SensorNode] = {}
        self.eps: dict[str, ElementaryProcessor] = {}
        self.connectors: dict[int, Connector] = {}
        self.conduits: list[Conduit] = []
        self.conduits_by_flow: dict[int, list[Conduit]] = {}
        self.conduit_consumer: dict[str, ElementaryProcessor] = {}
        self.conduit_producer: dict[str, str] = {}
        self._sampling_gen: dict[tuple[int, str], int] = {}
        self._next_flow_id = 1

        self._assign_ids()
        self._build_flows()
        self._build_stations()
        self._build_sensors()
        self._build_catalog()
        self._build_software_eps()
        self._place_sensors()
        self._build_conduits()
        self._schedule_bootstrap()

    # -- construction ----------------------------------------------------

    def _assign_ids(self) -> None:
        next_id = 1
        for decl in self.scenario.stations:
            self.ids[decl.name] = next_id
            self.labels[next_id] = decl.name
            next_id += 1
        for decl in self.scenario.sensors:
            self.ids[decl.name] = next_id
            self.labels[next_id] = decl.name
            next_id += 1

    def _alloc_flow(self, name: str, spec: FlowSpec) -> None:
        self.flow_ids[name] = spec.flow_id
        self.flow_specs[spec.flow_id] = spec
        self.flow_names[spec.flow_id] = name
        self.flow_producer[spec.flow_id] = spec.producer_id

    def _consumers_of(self, flow_name: str) -> tuple[str, ...]:
        consumers = tuple(
            c.target for c in self.scenario.connects if flow_name in c.flows
        )
        return consumers or (TRACE_SINK,)

    def _build_flows(self) -> None:
        for decl in self.scenario.functions:
            spec = FlowSpec(
                self._next_flow_id,
                FlowKind.DATA,
                decl.period,
                decl.sensor,
                self._consumers_of(decl.flow),
                decl.tag,
            )
            self._next_flow_id += 1
            self._alloc_flow(decl.flow, spec)
        for decl in self.scenario.bcs:
            spec = FlowSpec(
                self._next_flow_id,
                FlowKind.DATA,
                decl.period,
                decl.name,
                self._consumers_of(decl.produces),
                decl.tag,
            )
            self._next_flow_id += 1
            self._alloc_flow(decl.produces, spec)

    def _state_flow(self, owner: str) -> FlowSpec:
        spec = FlowSpec(self._next_flow_id, FlowKind.STATE, 1, owner, ("platform",))
        self._next_flow_id += 1
        return spec

    def _build_stations(self) -> None:
        for decl in self.scenario.stations:
            station_id = self.ids[decl.name]
            station = Station(station_id, (decl.x, decl.y), decl.range, decl.name)
            self.registry.add_station(station)
            self.net.add(station_id, station, self._make_station_rx(station))

    def _build_sensors(self) -> None:
        functions_by_sensor: dict[str, list[SensorFunction]] = {}
        for decl in self.scenario.functions:
            spec = self.flow_specs[self.flow_ids[decl.flow]]
            functions_by_sensor.setdefault(decl.sensor, []).append(
                SensorFunction(decl.flow, decl.kind, decl.period, spec)
            )
        for decl in self.scenario.sensors:
            functions = functions_by_sensor.get(decl.name, [])
            if not functions:
                raise FlowmeshError(f"sensor {decl.name!r} declares no function")
            if len(functions) > 1:
                # The wire format has no flow discriminator, so one radio
                # data flow per sensor is all the runtime can carry.
                raise FlowmeshError(
                    f"sensor {decl.name!r} declares {len(functions)} functions; "
                    "the radio carries one data flow per sensor"
                )
            node_id = self.ids[decl.name]
            node = SensorNode(
                node_id,
                IdCard(decl.mhz, decl.mem_kb, 128, decl.battery, decl.os),
                functions,
                (decl.x, decl.y),
                decl.range,
                label=decl.name,
                tracer=self.tracer,
                qos_sink=self.handle_qos,
                on_command=self._on_sensor_command,
            )
            node.send = lambda msg, nid=node_id: self.net.broadcast(nid, msg)
            self.sensor_by_label[decl.name] = node
            self.registry.add_sensor(node)
            self.net.add(node_id, node, self._make_sensor_rx(node))

    def _build_catalog(self) -> None:
        for decl in self.scenario.transforms:
            fn = BUILTIN_TRANSFORMS.get(decl.builtin)
            if fn is None:
                raise FlowmeshError(f"unknown transform builtin {decl.builtin!r}")
            self.registry.catalog[(decl.from_tag, decl.to_tag)] = fn

    def _arriving_flows(self, bc_name: str) -> list[FlowSpec]:
        specs: list[FlowSpec] = []
        for connect_decl in self.scenario.connects:
            if connect_decl.target != bc_name:
                continue
            for flow_name in connect_decl.flows:
                spec = self.flow_specs[self.flow_ids[flow_name]]
                if spec not in specs:
                    specs.append(spec)
        return specs

    def _build_software_eps(self) -> None:
        for decl in self.scenario.bcs:
            consumed_ids = set()
            for flow_name, _ in decl.consumes:
                consumed_ids.add(self.flow_ids[flow_name])
            arriving = self._arriving_flows(decl.name)
            arriving_ids = {spec.flow_id for spec in arriving}
            missing = consumed_ids - arriving_ids
            if missing:
                names = [self.flow_names[fid] for fid in sorted(missing)]
                raise FlowmeshError(
                    f"component {decl.name!r} consumes {names} but nothing connects them"
                )
            produces = [self.flow_specs[self.flow_ids[decl.produces]]]
            hosted = make_builtin(
                decl.name,
                consumed_ids,
                produces,
                analyzer_kwargs=dict(
                    flow_source={
                        fid: self.flow_producer[fid]
                        for fid in consumed_ids
                        if self.flow_producer[fid] in self.sensor_by_label
                    },
                    locate=lambda label: self.sensor_by_label[label].position,
                    cameras=self._camera_listing,
                ) if decl.name.startswith("motion-analyzer") else None,
            )
            station_id = self.ids[decl.station]
            ep_id = f"ep:{decl.name}"
            ep = ElementaryProcessor(
                ep_id,
                station_id,
                hosted,
                arriving,
                state_flow=self._state_flow(ep_id),
                scheduler=self.net,
                qos_sink=self.handle_qos,
                tracer=self.tracer,
            )
            ep.output_sink = self._make_ou_sink(ep)
            ep.cu.on_command_request = self._dispatch_command
            self.eps[ep_id] = ep
            self.registry.stations[station_id].eps[ep_id] = ep

    def _camera_listing(self) -> list[tuple[int, str, tuple[float, float]]]:
        cameras = []
        for label in sorted(self.sensor_by_label):
            node = self.sensor_by_label[label]
            if not node.alive:
                continue
            if any(fn.kind == "camera" for fn in node.functions.values()):
                cameras.append((node.node_id, label, node.position))
        return sorted(cameras)

    def _place_sensors(self) -> None:
        for decl in self.scenario.sensors:
            node = self.sensor_by_label[decl.name]
            try:
                station_id, actions = self.registry.ensure_placement(node.node_id)
            except NoReachableStation:
                self.tracer.emit(0, "QOS", ("kind", QoSKind.NODE_DOWN.value),
                                 ("subject", decl.name), ("reason", "unplaceable"))
                self.registry.mark_down(node.node_id)
                continue
            for action in actions:
                self._apply_action(action, 0)
            self._install_proxy(node, station_id)

    def _install_proxy(self, node: SensorNode, station_id: int) -> None:
        label = node.label
        ep_id = f"ep:{label}"
        connector_id = f"cx:{label}"
        data_spec = next(iter(node.functions.values())).flow
        state_spec = self._state_flow(ep_id)
        connector = Connector(
            connector_id,
            ep_id,
            node.node_id,
            station_id,
            data_flow_id=data_spec.flow_id,
            state_flow_id=state_spec.flow_id,
            qos_sink=self.handle_qos,
            scheduler=self.net,
            sensor_label=label,
        )
        connector.send = lambda msg, c=connector: self._station_tx(c.station_id, msg)
        connector.route_next_hop = lambda dest, c=connector: self.registry.next_hop(
            c.station_id, dest
        )
        connector.on_drop = lambda now, reason, c=connector: self.tracer.emit(
            now, "DROP", ("connector", c.connector_id), ("reason", reason)
        )
        connector.on_call = lambda rid, name, now, c=connector: self.tracer.emit(
            now, "CALL", ("connector", c.connector_id), ("name", name), ("rid", rid)
        )
        connector.response_handler = lambda rid, name, params, c=connector: (
            self.tracer.emit(self.net.now, "RESPONSE", ("connector", c.connector_id),
                             ("name", name), ("rid", rid))
        )
        proxy = SensorProxy(label, produces=[data_spec], connector=connector)
        ep = ElementaryProcessor(
            ep_id,
            station_id,
            proxy,
            [data_spec],
            state_flow=state_spec,
            scheduler=self.net,
            qos_sink=self.handle_qos,
            tracer=self.tracer,
        )
        ep.output_sink = self._make_ou_sink(ep)
        ep.cu.on_command_request = self._dispatch_command
        connector.deliver_data = lambda tu, e=ep: e.receive(tu, self.net.now)
        connector.deliver_state = lambda tu, n=node: self._on_sensor_state(n, tu)
        self.eps[ep_id] = ep
        self.connectors[node.node_id] = connector
        station = self.registry.stations[station_id]
        station.eps[ep_id] = ep
        station.connectors[connector_id] = connector
        self.registry.place(node.node_id, station_id, ep_id, connector_id)

    def _build_conduits(self) -> None:
        for index, decl in enumerate(self.scenario.connects):
            bundle = [self.flow_specs[self.flow_ids[name]] for name in decl.flows]
            consumer_ep = self.eps[f"ep:{decl.target}"]
            consumer_tags: dict[int, int] = {}
            for bc in self.scenario.bcs:
                if bc.name == decl.target:
                    for flow_name, tag in bc.consumes:
                        if tag is not None:
                            consumer_tags[self.flow_ids[flow_name]] = tag
            out_port = Port(decl.source, PortDirection.OUTPUT,
                            frozenset(spec.flow_id for spec in bundle))
            in_port = Port(decl.target, PortDirection.INPUT,
                           frozenset(spec.flow_id for spec in bundle))
            conduit = connect(
                out_port,
                in_port,
                bundle,
                conduit_id=f"k{index}:{decl.source}->{decl.target}",
                catalog=self.registry.catalog,
                consumer_tags=consumer_tags,
                scheduler=self.net,
                qos_sink=self.handle_qos,
                on_deliverable=lambda c, e=consumer_ep: self._drain_into_ep(c, e),
            )
            conduit.validate_transforms()
            self.conduits.append(conduit)
            self.conduit_consumer[conduit.conduit_id] = consumer_ep
            self.conduit_producer[conduit.conduit_id] = decl.source
            for spec in bundle:
                self.conduits_by_flow.setdefault(spec.flow_id, []).append(conduit)

    def _schedule_bootstrap(self) -> None:
        self.net.call_at(0, self._bootstrap, label="bootstrap")
        for action in self.scenario.script:
            self.net.call_at(
                action.time,
                lambda a=action: self._run_action(a),
                label=f"script:{action.kind}",
            )
        if self.scenario.sensors:
            period = self.registry.beacon_period
            self.net.call_at(period, self._beacon_tick, label="beacon")
            for decl in self.scenario.sensors:
                node = self.sensor_by_label[decl.name]
                self.net.call_at(
                    node.state_period,
                    lambda n=node: self._state_report_tick(n),
                    label=f"state:{decl.name}",
                )

    def _bootstrap(self) -> None:
        for ep in self.eps.values():
            ep.lifecycle(LifecycleCommand.INIT, self.net.now)
            if not isinstance(ep.hosted, SensorProxy):
                ep.lifecycle(LifecycleCommand.START, self.net.now)

    # -- periodic tasks ----------------------------------------------------

    def _beacon_tick(self) -> None:
        now = self.net.now
        for event in self.registry.beacon(now):
            self.handle_qos(event)
        self.net.call_at(now + self.registry.beacon_period, self._beacon_tick,
                         label="beacon")

    def _state_report_tick(self, node: SensorNode) -> None:
        if node.absent:
            return
        node.report_state(self.net.now)
        self.net.call_at(self.net.now + node.state_period,
                         lambda: self._state_report_tick(node),
                         label=f"state:{node.label}")

    def _on_sensor_command(self, node: SensorNode, name: str,
                           params: tuple[bytes, ...], now: int) -> None:
        if name != "start":
            return
        for function_id in node.function_order:
            key = (node.node_id, function_id)
            self._sampling_gen[key] = self._sampling_gen.get(key, 0) + 1
            generation = self._sampling_gen[key]
            period = node.functions[function_id].sample_period
            first = now if now % period == 0 else (now // period + 1) * period
            self.net.call_at(
                first,
                lambda t=first, f=function_id, g=generation: self._sample_tick(
                    node, f, g, t
                ),
                label=f"sample:{node.label}",
            )

    def _sample_tick(self, node: SensorNode, function_id: str,
                     generation: int, t: int) -> None:
        if self._sampling_gen.get((node.node_id, function_id)) != generation:
            return
        if node.absent or not node.sampling:
            return
        node.sample(function_id, t)
        node.transmit_pending(t)
        period = node.functions[function_id].sample_period
        self.net.call_at(
            t + period,
            lambda: self._sample_tick(node, function_id, generation, t + period),
            label=f"sample:{node.label}",
        )

    # -- radio plumbing -----------------------------------------------------

    def _station_tx(self, station_id: int, msg: Message) -> None:
        station = self.registry.stations[station_id]
        self.tracer.emit(
            self.net.now,
            "TX",
            ("node", station.label),
            ("kind", msg.kind.name.lower()),
            ("dest", self.labels.get(msg.final_dest, msg.final_dest)),
            ("next", self.labels.get(msg.next_hop, msg.next_hop)),
            ("bytes", len(msg.payload)),
        )
        self.net.broadcast(station_id, msg)

    def _make_sensor_rx(self, node: SensorNode):
        def handler(msg: Message, now: int) -> None:
            node.on_message(msg, now)

        return handler

    def _make_station_rx(self, station: Station):
        def handler(msg: Message, now: int) -> None:
            if not station.alive:
                return
            sid = station.station_id
            if msg.final_dest != sid and msg.final_dest != BROADCAST_ID:
                if msg.next_hop == sid:
                    next_hop = self.registry.next_hop(sid, msg.final_dest)
                    self.tracer.emit(
                        now, "RELAY", ("node", station.label),
                        ("dest", self.labels.get(msg.final_dest, msg.final_dest)),
                        ("next", self.labels.get(next_hop, next_hop)),
                        ("bytes", len(msg.payload)),
                    )
                    forward = Message(msg.kind, msg.source, msg.final_dest,
                                      next_hop, msg.timestamp, msg.payload)
                    self.net.broadcast(sid, forward)
                return
            self.tracer.emit(
                now, "RX", ("node", station.label),
                ("kind", msg.kind.name.lower()),
                ("source", self.labels.get(msg.source, msg.source)),
            )
            if msg.source in self.registry.sensors:
                self.registry.mark_seen(msg.source, now)
                connector = self.connectors.get(msg.source)
                if connector is None or connector.station_id != sid:
                    self.tracer.emit(now, "DROP", ("node", station.label),
                                     ("reason", "no connector here"),
                                     ("source", self.labels.get(msg.source, msg.source)))
                    return
                connector.on_radio(msg, now)
            elif msg.source in self.registry.stations and msg.kind is FlowKind.DATA:
                try:
                    tu = decode_station_tu(msg.payload, msg.timestamp)
                except CodecError:
                    self.tracer.emit(now, "DROP", ("node", station.label),
                                     ("reason", "bad station payload"))
                    return
                delivered = False
                for conduit in self.conduits_by_flow.get(tu.flow_id, []):
                    consumer = self.conduit_consumer[conduit.conduit_id]
                    if consumer.station_id == sid:
                        conduit.push(tu)
                        delivered = True
                if not delivered:
                    self.tracer.emit(now, "DROP", ("node", station.label),
                                     ("reason", "no conduit"),
                                     ("flow", self.flow_names.get(tu.flow_id,
                                                                  tu.flow_id)))

        return handler

    def _make_ou_sink(self, ep: ElementaryProcessor):
        def sink(tu: TemporalUnit) -> None:
            conduits = self.conduits_by_flow.get(tu.flow_id, [])
            if not conduits:
                self.tracer.emit(
                    self.net.now, "OUTPUT", ("ep", ep.ep_id),
                    ("flow", self.flow_names.get(tu.flow_id, tu.flow_id)),
                    ("ts", tu.timestamp), ("bytes", len(tu.samples)),
                )
                return
            for conduit in conduits:
                consumer = self.conduit_consumer[conduit.conduit_id]
                if consumer.station_id == ep.station_id:
                    conduit.push(tu)
                else:
                    self._radio_tu(ep.station_id, consumer.station_id, tu)

        return sink

    def _radio_tu(self, from_station: int, to_station: int, tu: TemporalUnit) -> None:
        msg = Message(
            FlowKind.DATA,
            from_station,
            to_station,
            self.registry.next_hop(from_station, to_station),
            tu.timestamp,
            encode_station_tu(tu),
        )
        self._station_tx(from_station, msg)

    def _drain_into_ep(self, conduit: Conduit, ep: ElementaryProcessor) -> None:
        for tu in conduit.drain():
            self.tracer.emit(
                self.net.now, "DELIVER", ("conduit", conduit.conduit_id),
                ("flow", self.flow_names.get(tu.flow_id, tu.flow_id)),
                ("ts", tu.timestamp), ("bytes", len(tu.samples)),
            )
            ep.receive(tu, self.net.now)

    # -- supervision plumbing -------------------------------------------------

    def _on_sensor_state(self, node: SensorNode, tu: TemporalUnit) -> None:
        ep = self.eps.get(f"ep:{node.label}")
        if ep is not None:
            ep.receive_state(tu)
        try:
            payload = CommandPayload.decode(tu.samples)
        except CodecError:
            return
        if payload.name == "state" and payload.params:
            try:
                battery = int(payload.params[0])
            except ValueError:
                return
            self.tracer.emit(self.net.now, "STATE", ("node", node.label),
                             ("battery", battery))
            event = self.registry.note_state_report(node.node_id, battery,
                                                    self.net.now)
            if event is not None:
                self.handle_qos(event)

    def handle_qos(self, event: QoSEvent) -> None:
        fields: list[tuple[str, object]] = [
            ("kind", event.kind.value), ("subject", event.subject),
        ]
        for key, value in event.detail:
            fields.append((key, value))
        self.tracer.emit(event.time, "QOS", *fields)
        for action in self.registry.handle_qos(event):
            self._apply_action(action, event.time)

    def _apply_action(self, action, now: int) -> None:
        if isinstance(action, InstallRelay):
            path = "->".join(self.labels.get(nid, str(nid)) for nid in action.path)
            self.tracer.emit(now, "RELAY_PATH", ("path", path))
        elif isinstance(action, Migrate):
            self.registry.migrate(action.ep_id, action.connector_id,
                                  action.to_station, now)
        elif isinstance(action, StopEp):
            ep = self.eps.get(action.ep_id)
            if ep is not None and ep.state is EpState.RUNNING:
                ep.lifecycle(LifecycleCommand.STOP, now)
        elif isinstance(action, AbandonConduits):
            label = action.ep_id.removeprefix("ep:")
            for conduit in self.conduits:
                if self.conduit_producer.get(conduit.conduit_id) == label:
                    conduit.abandon_pending(now)
        elif isinstance(action, MarkDown):
            if action.sensor_id not in self.registry.down:
                self.registry.mark_down(action.sensor_id)
                self.tracer.emit(now, "QOS", ("kind", QoSKind.NODE_DOWN.value),
                                 ("subject", self.labels[action.sensor_id]))

    # -- script -------------------------------------------------------------

    def _run_action(self, action) -> None:
        now = self.net.now
        if action.kind == "move":
            label, x, y = action.args
            self.net.move(self.ids[label], (float(x), float(y)), now)
        elif action.kind == "fail":
            label = action.args[0]
            self.tracer.emit(now, "FAIL", ("node", label))
            if label in self.sensor_by_label:
                self.sensor_by_label[label].fail()
                self.handle_qos(QoSEvent(QoSKind.NODE_DOWN, label, now))
            else:
                self._fail_station(label, now)
        elif action.kind == "stimulus":
            label, payload_hex = action.args
            node = self.sensor_by_label[label]
            function_id = node.function_order[0]
            node.inject_reading(function_id, bytes.fromhex(payload_hex), now)
            node.transmit_pending(now)
        elif action.kind == "command":
            label, name, *params = action.args
            self._dispatch_command(label, name,
                                   tuple(bytes.fromhex(p) for p in params), now)

    def _fail_station(self, label: str, now: int) -> None:
        station_id = self.ids[label]
        station = self.registry.stations[station_id]
        station.alive = False
        for ep in list(station.eps.values()):
            if ep.state is EpState.RUNNING:
                ep.lifecycle(LifecycleCommand.STOP, now)
        for sensor_id, placed in list(self.registry.placements.items()):
            if placed == station_id:
                self.handle_qos(
                    QoSEvent(QoSKind.SENSOR_ABSENT, self.labels[sensor_id], now,
                             (("reason", "station down"),))
                )

    def _dispatch_command(self, target: str, name: str,
                          params: tuple[bytes, ...], now: int) -> None:
        self.tracer.emit(now, "COMMAND", ("target", target), ("name", name))
        ep = self.eps.get(f"ep:{target}")
        if ep is None:
            self.tracer.emit(now, "DROP", ("reason", "unknown command target"),
                             ("target", target))
            return
        lifecycle = {
            "init": (LifecycleCommand.INIT, (EpState.CREATED,)),
            "start": (LifecycleCommand.START, (EpState.INITIALIZED, EpState.STOPPED)),
            "stop": (LifecycleCommand.STOP, (EpState.RUNNING,)),
        }
        node = self.sensor_by_label.get(target)
        if name in lifecycle:
            command, legal_from = lifecycle[name]
            if ep.state in legal_from:
                ep.lifecycle(command, now)
            elif node is not None:
                # EP already past the transition: talk to the sensor itself.
                self.connectors[node.node_id].call(name, list(params), now)
        elif node is not None:
            self.connectors[node.node_id].call(name, list(params), now)

    # -- execution -------------------------------------------------------------

    def run(self, until: int) -> RunSummary:
        try:
            self.net.advance_until(until)
        except FlowmeshError as exc:
            self.tracer.emit(self.net.now, "ERROR", ("message", str(exc)))
        qos: dict[str, int] = {}
        for record in self.tracer.of_kind("QOS"):
            kind = dict(record.fields).get("kind", "?")
            qos[kind] = qos.get(kind, 0) + 1
        return RunSummary(
            until=until,
            seed=self.seed,
            executed_events=self.net.executed,
            records=len(self.tracer.records),
            qos=qos,
            abandoned_slices=qos.get(QoSKind.SLICE_ABANDONED.value, 0),
            relays=self.tracer.count("RELAY"),
            errors=self.tracer.count("ERROR"),
            final_battery={
                label: node.battery
                for label, node in sorted(self.sensor_by_label.items())
            },
        )


def run_scenario(
    scenario: Scenario, *, seed: int = 0, until: int = 100,
    tracer: Tracer | None = None,
) -> tuple[RunSummary, Tracer]:
    tracer = tracer if tracer is not None else Tracer()
    try:
        runtime = Runtime(scenario, seed=seed, tracer=tracer)
    except FlowmeshError as exc:
        tracer.emit(0, "ERROR", ("message", str(exc)))
        summary = RunSummary(until=until, seed=seed, executed_events=0,
                             records=len(tracer.records), qos={},
                             abandoned_slices=0, relays=0, errors=1)
        return summary, tracer
    return runtime.run(until), tracer
