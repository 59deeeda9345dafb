import pytest
from hypothesis import given, settings, strategies as st

from flowmesh.connector import (
    BROADCAST_ID,
    CommandPayload,
    Connector,
    Message,
    append_rid,
    decode_station_tu,
    encode_station_tu,
    rid_param,
    split_rid,
)
from flowmesh.errors import CodecError, NameTooLong, TooManyParams
from flowmesh.events import QoSKind
from flowmesh.flows import MAX_SAMPLES, FlowKind, TemporalUnit


# -- wire codec ----------------------------------------------------------


def test_message_layout_hand_encoded():
    # Hand-built frame: version 01, kind 02, source 0x0003, dest 0x0001,
    # next hop 0x0002, ts 42, payload "hi".
    msg = Message(FlowKind.COMMAND, 3, 1, 2, 42, b"hi")
    expected = bytes.fromhex("0102" "0003" "0001" "0002" "000000000000002a" "0002") + b"hi"
    assert msg.encode() == expected
    assert len(msg.encode()) == 18 + 2


def test_message_round_trip():
    msg = Message(FlowKind.DATA, 7, BROADCAST_ID, 9, 2**40, bytes(range(256)))
    assert Message.decode(msg.encode()) == msg


def test_message_rejects_bad_version():
    raw = bytearray(Message(FlowKind.DATA, 1, 2, 3, 4, b"").encode())
    raw[0] = 0x02
    with pytest.raises(CodecError):
        Message.decode(bytes(raw))


def test_message_rejects_bad_kind():
    raw = bytearray(Message(FlowKind.DATA, 1, 2, 3, 4, b"").encode())
    raw[1] = 0x07
    with pytest.raises(CodecError):
        Message.decode(bytes(raw))


def test_message_rejects_length_mismatch():
    raw = Message(FlowKind.DATA, 1, 2, 3, 4, b"abc").encode()
    with pytest.raises(CodecError):
        Message.decode(raw[:-1])


def test_message_rejects_oversized_payload():
    with pytest.raises(CodecError):
        Message(FlowKind.DATA, 1, 2, 3, 4, bytes(MAX_SAMPLES + 1)).encode()


def test_command_payload_start_golden_bytes():
    # Oracle: hand-encoded per the layout — name length 0x05, "start",
    # zero params — before the correlation param is appended.
    payload = CommandPayload("start")
    assert payload.encode() == bytes.fromhex("05 73 74 61 72 74 00".replace(" ", ""))


def test_command_payload_with_param_hand_encoded():
    payload = CommandPayload("getTemperature", (b"C",))
    name = b"getTemperature"
    expected = bytes([len(name)]) + name + b"\x01" + b"\x00\x01" + b"C"
    assert payload.encode() == expected
    decoded = CommandPayload.decode(expected)
    assert decoded.name == "getTemperature"
    assert decoded.params == (b"C",)


def test_command_payload_name_too_long():
    with pytest.raises(NameTooLong):
        CommandPayload("x" * 256).encode()


def test_command_payload_name_255_ok():
    assert CommandPayload("x" * 255).encode()[0] == 255


def test_command_payload_too_many_params():
    with pytest.raises(TooManyParams):
        CommandPayload("f", tuple(b"p" for _ in range(256))).encode()


def test_command_payload_empty_name_rejected():
    with pytest.raises(CodecError):
        CommandPayload("").encode()


def test_rid_append_and_split():
    payload = append_rid(CommandPayload("start"), 0x0102)
    assert payload.params[-1] == b"_rid\x01\x02"
    params, rid = split_rid(payload.params)
    assert params == ()
    assert rid == 0x0102


def test_split_rid_absent():
    params, rid = split_rid((b"plain",))
    assert params == (b"plain",)
    assert rid is None


def test_station_tu_framing():
    tu = TemporalUnit(0x0203, 9, b"payload")
    framed = encode_station_tu(tu)
    assert framed == b"\x02\x03payload"
    assert decode_station_tu(framed, 9) == tu


def test_station_tu_cap():
    with pytest.raises(CodecError):
        encode_station_tu(TemporalUnit(1, 0, bytes(MAX_SAMPLES - 1)))


@settings(max_examples=200, deadline=None)
@given(
    kind=st.sampled_from(list(FlowKind)),
    source=st.integers(0, 0xFFFF),
    dest=st.integers(0, 0xFFFF),
    hop=st.integers(0, 0xFFFF),
    ts=st.integers(0, 2**64 - 1),
    payload=st.binary(max_size=300),
)
def test_message_codec_round_trip_property(kind, source, dest, hop, ts, payload):
    msg = Message(kind, source, dest, hop, ts, payload)
    assert Message.decode(msg.encode()) == msg


@settings(max_examples=200, deadline=None)
@given(
    name=st.text(min_size=1, max_size=40).filter(lambda s: 1 <= len(s.encode()) <= 255),
    params=st.lists(st.binary(max_size=80), max_size=8),
)
def test_command_codec_round_trip_property(name, params):
    payload = CommandPayload(name, tuple(params))
    assert CommandPayload.decode(payload.encode()) == payload


# -- connector protocol ----------------------------------------------------


def make_connector(**kwargs):
    sent = []
    connector = Connector(
        "cx", "ep", sensor_node_id=7, station_id=1,
        data_flow_id=3, state_flow_id=9,
        send=sent.append, **kwargs,
    )
    return connector, sent


def test_call_emits_one_command_message_and_returns_same_tick():
    connector, sent = make_connector()
    rid = connector.call("start", [], now=5)
    assert rid == 1
    assert len(sent) == 1
    msg = sent[0]
    assert msg.kind is FlowKind.COMMAND
    assert msg.source == 1 and msg.final_dest == 7 and msg.next_hop == 7
    assert msg.timestamp == 5
    payload = CommandPayload.decode(msg.payload)
    assert payload.name == "start"
    assert payload.params == (rid_param(rid),)
    assert connector.pending == {rid: ("start", 5)}


def test_call_name_too_long():
    connector, _ = make_connector()
    with pytest.raises(NameTooLong):
        connector.call("x" * 256, [], now=0)


def test_call_uses_routing_for_next_hop():
    connector, sent = make_connector(route_next_hop=lambda dest: 4)
    connector.call("ping", [], now=0)
    assert sent[0].next_hop == 4


def test_data_message_injected_as_tu():
    received = []
    connector, _ = make_connector(deliver_data=received.append)
    msg = Message(FlowKind.DATA, 7, 1, 1, 42, bytes(240))
    assert connector.on_radio(msg, now=43) == "data"
    assert received == [TemporalUnit(3, 42, bytes(240))]


def test_state_message_forwarded_to_cu():
    states = []
    connector, _ = make_connector(deliver_state=states.append)
    report = CommandPayload("state", (b"994", b"524288", b"idle")).encode()
    msg = Message(FlowKind.STATE, 7, 1, 1, 10, report)
    assert connector.on_radio(msg, now=11) == "state"
    assert states[0].timestamp == 10
    assert CommandPayload.decode(states[0].samples).params[0] == b"994"


def test_response_clears_pending_and_invokes_handler():
    hits = []
    connector, _ = make_connector(
        response_handler=lambda rid, name, params: hits.append((rid, name, params))
    )
    rid = connector.call("ping", [], now=0)
    reply = CommandPayload("ping", (b"ok", rid_param(rid))).encode()
    connector.on_radio(Message(FlowKind.STATE, 7, 1, 1, 2, reply), now=2)
    assert connector.pending == {}
    assert hits == [(rid, "ping", (b"ok",))]
    assert connector.tick(100) == []


def test_unmatched_response_dropped():
    drops = []
    connector, _ = make_connector(on_drop=lambda now, reason: drops.append(reason))
    reply = CommandPayload("ping", (b"ok", rid_param(77))).encode()
    outcome = connector.on_radio(Message(FlowKind.STATE, 7, 1, 1, 2, reply), now=2)
    assert outcome == "dropped"
    assert any("unmatched" in reason for reason in drops)


def test_tick_no_pending():
    connector, _ = make_connector()
    assert connector.tick(51) == []


def test_tick_expires_old_request():
    connector, _ = make_connector()
    connector.call("ping", [], now=0)
    assert connector.tick(49) == []
    events = connector.tick(51)
    assert len(events) == 1
    assert events[0].kind is QoSKind.SENSOR_ABSENT
    assert events[0].detail_dict()["request"] == 1
    assert connector.pending == {}


def test_response_before_timeout_no_event():
    connector, _ = make_connector()
    rid = connector.call("ping", [], now=0)
    reply = CommandPayload("ping", (b"ok", rid_param(rid))).encode()
    connector.on_radio(Message(FlowKind.STATE, 7, 1, 1, 49, reply), now=49)
    assert connector.tick(51) == []


def test_one_call_one_message_over_many_calls():
    connector, sent = make_connector()
    for i in range(25):
        connector.call("ping", [b"x"], now=i)
    assert connector.calls_made == len(sent) == 25
