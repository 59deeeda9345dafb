"""Supervision platform: registry, placement, relays, QoS reactions.

One logical platform holds the component registry and makes every
placement and routing decision; what gets distributed to stations are the
installed artifacts (externalized CUs, connectors, relay tables). Decisions
use exact squared-distance comparisons so ties are broken purely by id.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .errors import NoReachableStation, StationDown, UnknownNode, Unreachable
from .events import QoSEvent, QoSKind
from .sensor import SensorNode

DEFAULT_BEACON_PERIOD = 20
MISSED_BEACON_LIMIT = 3
BATTERY_LOW_FRACTION = 0.1


@dataclass
class Station:
    """Fixed, always-powered site able to host platform artifacts."""

    station_id: int
    position: tuple[float, float]
    radio_range: float
    label: str
    alive: bool = True
    eps: dict[str, object] = field(default_factory=dict)
    connectors: dict[str, object] = field(default_factory=dict)
    cus: set[int] = field(default_factory=set)


def dist2(a: tuple[float, float], b: tuple[float, float]) -> float:
    return (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2


def _mutually_in_range(a, b) -> bool:
    reach = min(a.radio_range, b.radio_range)
    return dist2(a.position, b.position) <= reach * reach


# Reconfiguration actions handle_qos hands back to the runtime.


@dataclass(frozen=True)
class Migrate:
    ep_id: str
    connector_id: str
    sensor_id: int
    from_station: int
    to_station: int


@dataclass(frozen=True)
class InstallRelay:
    path: tuple[int, ...]


@dataclass(frozen=True)
class StopEp:
    ep_id: str


@dataclass(frozen=True)
class AbandonConduits:
    ep_id: str


@dataclass(frozen=True)
class MarkDown:
    sensor_id: int


Action = Migrate | InstallRelay | StopEp | AbandonConduits | MarkDown


class Registry:
    """Single source of truth for components, placement and routing."""

    def __init__(
        self,
        *,
        beacon_period: int = DEFAULT_BEACON_PERIOD,
        tracer=None,
    ):
        self.stations: dict[int, Station] = {}
        self.sensors: dict[int, SensorNode] = {}
        self.placements: dict[int, int] = {}
        self.proxy_eps: dict[int, str] = {}
        self.proxy_connectors: dict[int, str] = {}
        self.catalog: dict[tuple[int, int], Callable[[bytes], bytes]] = {}
        self.station_routes: dict[int, dict[int, int]] = {}
        self.relay_paths: dict[tuple[int, int], tuple[int, ...]] = {}
        self.last_seen: dict[int, int] = {}
        self.down: set[int] = set()
        self.beacon_period = beacon_period
        self.initial_battery: dict[int, int] = {}
        self.tracer = tracer
        self.migration_hooks: list[Callable[[str, int, int], None]] = []
        self._silence_reported: set[int] = set()

    # -- membership ------------------------------------------------------

    def add_station(self, station: Station) -> None:
        if station.station_id in self.stations:
            raise ValueError(f"station {station.station_id} registered twice")
        self.stations[station.station_id] = station
        self.station_routes.setdefault(station.station_id, {})

    def add_sensor(self, node: SensorNode, now: int = 0) -> None:
        if node.node_id in self.sensors:
            raise ValueError(f"sensor {node.node_id} registered twice")
        self.sensors[node.node_id] = node
        self.initial_battery[node.node_id] = node.battery
        self.last_seen[node.node_id] = now

    def label_of(self, entity_id: int) -> str:
        if entity_id in self.stations:
            return self.stations[entity_id].label
        if entity_id in self.sensors:
            return self.sensors[entity_id].label
        return str(entity_id)

    def id_of_label(self, label: str) -> int | None:
        for sid, station in self.stations.items():
            if station.label == label:
                return sid
        for nid, node in self.sensors.items():
            if node.label == label:
                return nid
        return None

    # -- placement -------------------------------------------------------

    def covers_directly(self, station: Station, node: SensorNode) -> bool:
        return station.alive and _mutually_in_range(station, node)

    def _installed_path_usable(self, station_id: int, sensor_id: int) -> bool:
        path = self.relay_paths.get((sensor_id, station_id))
        if path is None:
            return False
        hops = [self._entity(eid) for eid in path]
        if any(hop is None or not hop.alive for hop in hops):
            return False
        return all(
            _mutually_in_range(hops[i], hops[i + 1]) for i in range(len(hops) - 1)
        )

    def _entity(self, entity_id: int):
        return self.stations.get(entity_id) or self.sensors.get(entity_id)

    def place_cu(self, sensor_id: int) -> int:
        """Nearest station covering the sensor, lowest id on exact ties."""
        node = self.sensors.get(sensor_id)
        if node is None:
            raise UnknownNode(f"sensor {sensor_id} not registered")
        best: tuple[float, int] | None = None
        for station_id in sorted(self.stations):
            station = self.stations[station_id]
            if not station.alive:
                continue
            if self.covers_directly(station, node) or self._installed_path_usable(
                station_id, sensor_id
            ):
                key = (dist2(station.position, node.position), station_id)
                if best is None or key < best:
                    best = key
        if best is None:
            raise NoReachableStation(f"no station reaches sensor {node.label}")
        return best[1]

    # -- relays ----------------------------------------------------------

    def _range_graph(self) -> dict[int, list[int]]:
        nodes: dict[int, object] = {}
        for station_id, station in self.stations.items():
            if station.alive:
                nodes[station_id] = station
        for sensor_id, node in self.sensors.items():
            if node.alive and sensor_id not in self.down:
                nodes[sensor_id] = node
        graph: dict[int, list[int]] = {nid: [] for nid in nodes}
        ids = sorted(nodes)
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                if _mutually_in_range(nodes[a], nodes[b]):
                    graph[a].append(b)
                    graph[b].append(a)
        return graph

    def select_relay(self, from_id: int, to_id: int) -> list[int]:
        """Minimum-hop path, lexicographically smallest ids; installs tables."""
        if self._entity(from_id) is None or self._entity(to_id) is None:
            raise UnknownNode(f"relay endpoints {from_id}->{to_id} not registered")
        graph = self._range_graph()
        if from_id not in graph or to_id not in graph:
            raise Unreachable(f"{from_id} or {to_id} is not live")
        # Hop distances measured from the target let us walk a greedy
        # smallest-id descent, which yields the lexicographically smallest
        # of all minimum-hop paths.
        dist = {to_id: 0}
        frontier = [to_id]
        while frontier:
            nxt: list[int] = []
            for node in frontier:
                for neighbor in graph[node]:
                    if neighbor not in dist:
                        dist[neighbor] = dist[node] + 1
                        nxt.append(neighbor)
            frontier = nxt
        if from_id not in dist:
            raise Unreachable(f"no relay path {from_id}->{to_id}")
        path = [from_id]
        current = from_id
        while current != to_id:
            current = min(n for n in graph[current] if dist.get(n) == dist[current] - 1)
            path.append(current)
        self._install_path(path)
        return path

    def _install_path(self, path: list[int]) -> None:
        forward_dest = path[-1]
        reverse_dest = path[0]
        for i in range(len(path) - 1):
            self._set_route(path[i], forward_dest, path[i + 1])
        for i in range(len(path) - 1, 0, -1):
            self._set_route(path[i], reverse_dest, path[i - 1])
        self.relay_paths[(path[0], path[-1])] = tuple(path)
        self.relay_paths[(path[-1], path[0])] = tuple(reversed(path))

    def _set_route(self, at_id: int, dest: int, next_hop: int) -> None:
        if at_id in self.stations:
            self.station_routes[at_id][dest] = next_hop
        else:
            self.sensors[at_id].relay_table[dest] = next_hop

    def next_hop(self, from_station: int, dest: int) -> int:
        return self.station_routes.get(from_station, {}).get(dest, dest)

    # -- supervision -----------------------------------------------------

    def ensure_placement(self, sensor_id: int) -> tuple[int, list[Action]]:
        """Station for the sensor's CU, installing a relay when needed."""
        try:
            return self.place_cu(sensor_id), []
        except NoReachableStation:
            pass
        node = self.sensors[sensor_id]
        candidates = sorted(
            (dist2(st.position, node.position), sid)
            for sid, st in self.stations.items()
            if st.alive
        )
        for _, station_id in candidates:
            try:
                path = self.select_relay(sensor_id, station_id)
            except Unreachable:
                continue
            return self.place_cu(sensor_id), [InstallRelay(tuple(path))]
        raise NoReachableStation(f"no station reaches sensor {node.label}")

    def handle_qos(self, ev: QoSEvent) -> list[Action]:
        """Reconfiguration plan for one QoS event; pure decision, no motion."""
        if ev.kind in (QoSKind.BATTERY_LOW, QoSKind.MEMORY_FULL,
                       QoSKind.SLICE_ABANDONED):
            return []  # traced; policy hook only
        sensor_id = self.id_of_label(ev.subject)
        if sensor_id is None or sensor_id not in self.sensors:
            return []
        if ev.kind is QoSKind.NODE_DOWN:
            return self._down_actions(sensor_id)
        if ev.kind in (QoSKind.SENSOR_ABSENT, QoSKind.NODE_MOVED):
            node = self.sensors[sensor_id]
            if not node.alive:
                return self._down_actions(sensor_id)
            try:
                station_id, actions = self.ensure_placement(sensor_id)
            except NoReachableStation:
                return self._down_actions(sensor_id)
            current = self.placements.get(sensor_id)
            if current is not None and current != station_id:
                actions.append(
                    Migrate(
                        ep_id=self.proxy_eps.get(sensor_id, ""),
                        connector_id=self.proxy_connectors.get(sensor_id, ""),
                        sensor_id=sensor_id,
                        from_station=current,
                        to_station=station_id,
                    )
                )
            return actions
        return []

    def _down_actions(self, sensor_id: int) -> list[Action]:
        actions: list[Action] = [MarkDown(sensor_id)]
        ep_id = self.proxy_eps.get(sensor_id)
        if ep_id is not None:
            actions.append(StopEp(ep_id))
            actions.append(AbandonConduits(ep_id))
        return actions

    def mark_down(self, sensor_id: int) -> None:
        self.down.add(sensor_id)

    def mark_seen(self, sensor_id: int, now: int) -> None:
        self.last_seen[sensor_id] = now
        self._silence_reported.discard(sensor_id)

    def note_state_report(self, sensor_id: int, battery: int, now: int) -> QoSEvent | None:
        initial = self.initial_battery.get(sensor_id, 0)
        if initial and battery <= initial * BATTERY_LOW_FRACTION:
            return QoSEvent(
                QoSKind.BATTERY_LOW,
                self.label_of(sensor_id),
                now,
                (("battery", battery), ("initial", initial)),
            )
        return None

    def beacon(self, now: int) -> list[QoSEvent]:
        """Ask live sensors to beacon; report ones silent too long."""
        for sensor_id in sorted(self.sensors):
            node = self.sensors[sensor_id]
            if node.alive and sensor_id not in self.down:
                node.emit_beacon(now)
        events: list[QoSEvent] = []
        threshold = MISSED_BEACON_LIMIT * self.beacon_period
        for sensor_id in sorted(self.sensors):
            if sensor_id in self.down or sensor_id in self._silence_reported:
                continue
            if now - self.last_seen[sensor_id] >= threshold:
                self._silence_reported.add(sensor_id)
                events.append(
                    QoSEvent(
                        QoSKind.SENSOR_ABSENT,
                        self.label_of(sensor_id),
                        now,
                        (("reason", "beacon-silence"),),
                    )
                )
        return events

    # -- migration ---------------------------------------------------------

    def place(self, sensor_id: int, station_id: int, ep_id: str,
              connector_id: str) -> None:
        """Record an installed CU/connector/proxy for a sensor."""
        station = self.stations[station_id]
        station.cus.add(sensor_id)
        self.placements[sensor_id] = station_id
        self.proxy_eps[sensor_id] = ep_id
        self.proxy_connectors[sensor_id] = connector_id
        self.sensors[sensor_id].cu_station = station_id
        if self.tracer is not None:
            self.tracer.emit(0, "PLACE", ("sensor", self.label_of(sensor_id)),
                             ("station", station.label))

    def migrate(self, ep_id: str, connector_id: str, to_station: int,
                now: int) -> None:
        """Re-install a CU, its connector and port bindings on a new station."""
        target = self.stations.get(to_station)
        if target is None or not target.alive:
            raise StationDown(f"station {to_station} is not live")
        source: Station | None = None
        for station in self.stations.values():
            if ep_id in station.eps:
                source = station
                break
        if source is None:
            raise UnknownNode(f"EP {ep_id} is not hosted anywhere")
        ep = source.eps.pop(ep_id)
        connector = source.connectors.pop(connector_id, None)
        target.eps[ep_id] = ep
        ep.station_id = to_station
        sensor_id = None
        if connector is not None:
            target.connectors[connector_id] = connector
            connector.station_id = to_station
            sensor_id = connector.sensor_node_id
        if sensor_id is not None:
            source.cus.discard(sensor_id)
            target.cus.add(sensor_id)
            self.placements[sensor_id] = to_station
            self.sensors[sensor_id].cu_station = to_station
        if self.tracer is not None:
            self.tracer.emit(
                now,
                "MIGRATE",
                ("ep", ep_id),
                ("connector", connector_id),
                ("from", source.label),
                ("to", target.label),
            )
        for hook in self.migration_hooks:
            hook(ep_id, source.station_id, to_station)
