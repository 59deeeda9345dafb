"""Call<->message connector and the normative radio wire format.

The wire unit is a fixed 18-byte header followed by the payload, all
multi-byte fields big-endian:

    byte  0      version (0x01)
    byte  1      kind (0x00 data, 0x01 state, 0x02 command)
    bytes 2-3    source node/station id
    bytes 4-5    final destination id (0xFFFF = broadcast)
    bytes 6-7    next-hop id
    bytes 8-15   timestamp ticks
    bytes 16-17  payload length L (<= 60000)
    bytes 18..   payload

Command payloads carry a method name and positional byte-string
parameters. A connector turns EP-side method calls into command messages
(one call, one message, never blocking) and turns sensor messages back
into temporal units and state reports. Responses are matched to pending
calls through a trailing correlation parameter, since the message scheme
itself has no correlation field.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable

from .errors import CodecError, NameTooLong, TooManyParams
from .events import QoSEvent, QoSKind
from .flows import MAX_SAMPLES, FlowKind, TemporalUnit

WIRE_VERSION = 0x01
HEADER_LEN = 18
BROADCAST_ID = 0xFFFF
DEFAULT_RESPONSE_TIMEOUT = 50

_HEADER = struct.Struct(">BBHHHQH")

# Correlation parameter: b"_rid" marker plus the 2-byte request id,
# appended as the final parameter of every connector-issued command and
# stripped again before the sensor sees the parameter list.
RID_MARKER = b"_rid"
RID_PARAM_LEN = len(RID_MARKER) + 2


@dataclass(frozen=True)
class Message:
    """One radio wire unit; total encoded length is 18 + len(payload)."""

    kind: FlowKind
    source: int
    final_dest: int
    next_hop: int
    timestamp: int
    payload: bytes
    version: int = WIRE_VERSION

    def encode(self) -> bytes:
        if len(self.payload) > MAX_SAMPLES:
            raise CodecError(
                f"payload of {len(self.payload)} bytes exceeds {MAX_SAMPLES}"
            )
        for label, value in (
            ("source", self.source),
            ("final_dest", self.final_dest),
            ("next_hop", self.next_hop),
        ):
            if not 0 <= value <= 0xFFFF:
                raise CodecError(f"{label} {value} outside 16-bit range")
        if not 0 <= self.timestamp <= 0xFFFFFFFFFFFFFFFF:
            raise CodecError(f"timestamp {self.timestamp} outside 64-bit range")
        header = _HEADER.pack(
            self.version,
            int(self.kind),
            self.source,
            self.final_dest,
            self.next_hop,
            self.timestamp,
            len(self.payload),
        )
        return header + self.payload

    @staticmethod
    def decode(data: bytes) -> "Message":
        if len(data) < HEADER_LEN:
            raise CodecError(f"message truncated at {len(data)} bytes")
        version, kind, source, final_dest, next_hop, timestamp, length = _HEADER.unpack(
            data[:HEADER_LEN]
        )
        if version != WIRE_VERSION:
            raise CodecError(f"unsupported version 0x{version:02x}")
        if length > MAX_SAMPLES:
            raise CodecError(f"declared payload length {length} exceeds {MAX_SAMPLES}")
        if len(data) != HEADER_LEN + length:
            raise CodecError(
                f"length field says {length} but {len(data) - HEADER_LEN} bytes follow"
            )
        try:
            flow_kind = FlowKind(kind)
        except ValueError:
            raise CodecError(f"unknown kind byte 0x{kind:02x}") from None
        return Message(
            kind=flow_kind,
            source=source,
            final_dest=final_dest,
            next_hop=next_hop,
            timestamp=timestamp,
            payload=data[HEADER_LEN:],
        )


@dataclass(frozen=True)
class CommandPayload:
    """Method-call image on the wire: name plus positional byte params."""

    name: str
    params: tuple[bytes, ...] = ()

    def encode(self) -> bytes:
        name_bytes = self.name.encode("utf-8")
        if len(name_bytes) == 0:
            raise CodecError("command name must not be empty")
        if len(name_bytes) > 255:
            raise NameTooLong(f"name is {len(name_bytes)} bytes, limit 255")
        if len(self.params) > 255:
            raise TooManyParams(f"{len(self.params)} params, limit 255")
        out = bytearray()
        out.append(len(name_bytes))
        out.extend(name_bytes)
        out.append(len(self.params))
        for param in self.params:
            if len(param) > 0xFFFF:
                raise CodecError(f"param of {len(param)} bytes exceeds 65535")
            out.extend(struct.pack(">H", len(param)))
            out.extend(param)
        return bytes(out)

    @staticmethod
    def decode(data: bytes) -> "CommandPayload":
        if len(data) < 2:
            raise CodecError("command payload truncated")
        name_len = data[0]
        if name_len == 0:
            raise CodecError("command name must not be empty")
        pos = 1 + name_len
        if len(data) < pos + 1:
            raise CodecError("command payload truncated in name")
        try:
            name = data[1:pos].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CodecError(f"command name is not valid UTF-8: {exc}") from None
        count = data[pos]
        pos += 1
        params: list[bytes] = []
        for _ in range(count):
            if len(data) < pos + 2:
                raise CodecError("command payload truncated in param length")
            (length,) = struct.unpack(">H", data[pos : pos + 2])
            pos += 2
            if len(data) < pos + length:
                raise CodecError("command payload truncated in param body")
            params.append(data[pos : pos + length])
            pos += length
        if pos != len(data):
            raise CodecError(f"{len(data) - pos} trailing bytes after params")
        return CommandPayload(name=name, params=tuple(params))


def rid_param(request_id: int) -> bytes:
    return RID_MARKER + struct.pack(">H", request_id)


def append_rid(payload: CommandPayload, request_id: int) -> CommandPayload:
    return CommandPayload(payload.name, payload.params + (rid_param(request_id),))


def split_rid(params: tuple[bytes, ...]) -> tuple[tuple[bytes, ...], int | None]:
    """Strip the correlation param, returning the bare params and the id."""
    if params and len(params[-1]) == RID_PARAM_LEN and params[-1].startswith(RID_MARKER):
        (request_id,) = struct.unpack(">H", params[-1][len(RID_MARKER) :])
        return params[:-1], request_id
    return params, None


# Inter-station data transport reuses the same message format but needs a
# flow discriminator, so station-to-station data payloads start with the
# 16-bit flow id. Sensor-to-station data payloads stay bare samples (the
# sensor's single radio data flow identifies them), which is why a full
# 60000-byte unit always fits a sensor message but caps 2 bytes lower on
# station-to-station hops.
STATION_TU_OVERHEAD = 2


def encode_station_tu(tu: TemporalUnit) -> bytes:
    if len(tu.samples) > MAX_SAMPLES - STATION_TU_OVERHEAD:
        raise CodecError(
            f"{len(tu.samples)}-byte unit cannot cross a station-to-station hop"
        )
    return struct.pack(">H", tu.flow_id) + tu.samples


def decode_station_tu(payload: bytes, timestamp: int) -> TemporalUnit:
    if len(payload) < STATION_TU_OVERHEAD:
        raise CodecError("station data payload shorter than its flow id")
    (flow_id,) = struct.unpack(">H", payload[:STATION_TU_OVERHEAD])
    return TemporalUnit(flow_id, timestamp, payload[STATION_TU_OVERHEAD:])


class Connector:
    """Bridges one EP to its sensor: Left plug takes calls, Right plug talks radio.

    ``call`` returns within the same tick no matter whether the sensor is
    reachable; unanswered requests surface later as SensorAbsent QoS
    events. The connector lives on the same station as its EP.
    """

    def __init__(
        self,
        connector_id: str,
        ep_id: str,
        sensor_node_id: int,
        station_id: int,
        *,
        data_flow_id: int | None = None,
        state_flow_id: int | None = None,
        response_timeout: int = DEFAULT_RESPONSE_TIMEOUT,
        send: Callable[[Message], None] | None = None,
        route_next_hop: Callable[[int], int] | None = None,
        deliver_data: Callable[[TemporalUnit], None] | None = None,
        deliver_state: Callable[[TemporalUnit], None] | None = None,
        response_handler: Callable[[int, str, tuple[bytes, ...]], None] | None = None,
        qos_sink: Callable[[QoSEvent], None] | None = None,
        scheduler=None,
        sensor_label: str | None = None,
        on_drop: Callable[[int, str], None] | None = None,
    ):
        self.connector_id = connector_id
        self.ep_id = ep_id
        self.sensor_node_id = sensor_node_id
        self.station_id = station_id
        self.data_flow_id = data_flow_id
        self.state_flow_id = state_flow_id
        self.response_timeout = response_timeout
        self.send = send
        self.route_next_hop = route_next_hop
        self.deliver_data = deliver_data
        self.deliver_state = deliver_state
        self.response_handler = response_handler
        self.qos_sink = qos_sink
        self.scheduler = scheduler
        self.sensor_label = sensor_label or str(sensor_node_id)
        self.on_drop = on_drop
        self.on_call: Callable[[int, str, int], None] | None = None
        self.pending: dict[int, tuple[str, int]] = {}
        self.calls_made = 0
        self.messages_emitted = 0
        self._next_rid = 1

    def call(self, name: str, params: list[bytes], now: int) -> int:
        """Issue one command message to the sensor; returns immediately."""
        request_id = self._next_rid
        self._next_rid = self._next_rid % 0xFFFF + 1
        payload = append_rid(CommandPayload(name, tuple(params)), request_id)
        encoded = payload.encode()  # validates name and param limits
        next_hop = (
            self.route_next_hop(self.sensor_node_id)
            if self.route_next_hop is not None
            else self.sensor_node_id
        )
        message = Message(
            kind=FlowKind.COMMAND,
            source=self.station_id,
            final_dest=self.sensor_node_id,
            next_hop=next_hop,
            timestamp=now,
            payload=encoded,
        )
        self.pending[request_id] = (name, now)
        self.calls_made += 1
        if self.on_call is not None:
            self.on_call(request_id, name, now)
        if self.send is not None:
            self.send(message)
        self.messages_emitted += 1
        if self.scheduler is not None:
            self.scheduler.call_at(
                now + self.response_timeout, lambda: self.tick(self.scheduler.now)
            )
        return request_id

    def on_radio(self, msg: Message, now: int) -> str:
        """Route one radio message from this connector's sensor; returns what happened."""
        if msg.final_dest != self.station_id or msg.source != self.sensor_node_id:
            self._drop(now, "misrouted")
            return "dropped"
        if msg.kind is FlowKind.DATA:
            if self.data_flow_id is None:
                self._drop(now, "no data flow bound")
                return "dropped"
            tu = TemporalUnit(self.data_flow_id, msg.timestamp, msg.payload)
            if self.deliver_data is not None:
                self.deliver_data(tu)
            return "data"
        if msg.kind is FlowKind.STATE:
            outcome = "state"
            try:
                payload = CommandPayload.decode(msg.payload)
            except CodecError:
                payload = None
            if payload is not None:
                params, request_id = split_rid(payload.params)
                if request_id is not None:
                    entry = self.pending.pop(request_id, None)
                    if entry is None:
                        self._drop(now, f"unmatched response rid={request_id}")
                        return "dropped"
                    if self.response_handler is not None:
                        self.response_handler(request_id, payload.name, params)
                    outcome = "response"
            if self.deliver_state is not None and self.state_flow_id is not None:
                self.deliver_state(
                    TemporalUnit(self.state_flow_id, msg.timestamp, msg.payload)
                )
            return outcome
        self._drop(now, "command addressed to a station")
        return "dropped"

    def tick(self, now: int) -> list[QoSEvent]:
        """Expire pending requests older than the response timeout."""
        events: list[QoSEvent] = []
        for request_id in sorted(self.pending):
            name, issued = self.pending[request_id]
            if now - issued >= self.response_timeout:
                del self.pending[request_id]
                events.append(
                    QoSEvent(
                        kind=QoSKind.SENSOR_ABSENT,
                        subject=self.sensor_label,
                        time=now,
                        detail=(("request", request_id), ("name", name)),
                    )
                )
        if self.qos_sink is not None:
            for event in events:
                self.qos_sink(event)
        return events

    def _drop(self, now: int, reason: str) -> None:
        if self.on_drop is not None:
            self.on_drop(now, reason)
