import pytest

from flowmesh.connector import CommandPayload, Message, rid_param, split_rid
from flowmesh.errors import UnknownFunction
from flowmesh.events import QoSKind
from flowmesh.flows import FlowKind, FlowSpec
from flowmesh.sensor import EnergyCosts, IdCard, SensorFunction, SensorNode


def card(battery=1000, measure_kb=512):
    return IdCard(
        processor_mhz=4,
        measure_memory_kb=measure_kb,
        system_memory_kb=128,
        battery_units=battery,
        os_name="tinyos",
    )


def temp_function(flow_id=1, period=1):
    flow = FlowSpec(flow_id, FlowKind.DATA, period, "n1", ("m",), datatype_tag=2)
    return SensorFunction("temp", "temperature", period, flow)


def make_node(battery=1000, functions=None, **kwargs):
    sent = []
    node = SensorNode(
        node_id=7,
        id_card=card(battery),
        functions=functions or [temp_function()],
        position=(0.0, 0.0),
        radio_range=50.0,
        label="N1",
        send=sent.append,
        **kwargs,
    )
    node.cu_station = 1
    return node, sent


def test_sample_produces_stamped_tu():
    node, _ = make_node()
    tu = node.sample("temp", 0)
    assert tu is not None
    assert tu.timestamp == 0
    assert tu.flow_id == 1
    assert node.battery == 1000 - 2


def test_sample_unknown_function():
    node, _ = make_node()
    with pytest.raises(UnknownFunction):
        node.sample("nope", 0)


def test_sample_off_grid_rejected():
    node, _ = make_node(functions=[temp_function(period=3)])
    with pytest.raises(ValueError):
        node.sample("temp", 4)


def test_sample_with_exhausted_battery_returns_none():
    node, _ = make_node(battery=0)
    assert node.absent
    assert node.sample("temp", 0) is None


def test_mica2_like_node_samples_and_pays():
    # MICA2-shaped ID card: 4 MHz processor, 512 KB measure memory,
    # 128 KB system memory.
    node, sent = make_node(battery=100)
    assert node.id_card.processor_mhz == 4
    assert node.id_card.measure_memory_kb == 512
    assert node.id_card.system_memory_kb == 128
    tu = node.sample("temp", 0)
    assert tu is not None
    assert node.battery == 100 - node.costs.sample


def test_transmit_sends_data_to_cu_station():
    node, sent = make_node()
    node.sample("temp", 0)
    assert node.transmit_pending(0) == 1
    (msg,) = sent
    assert msg.kind is FlowKind.DATA
    assert msg.source == 7
    assert msg.final_dest == 1
    assert msg.timestamp == 0
    assert node.battery == 1000 - 2 - 3


def test_relay_preserves_payload_bytes():
    node, sent = make_node()
    node.relay_table[1] = 1  # destination station reachable directly
    payload = bytes(range(100))
    msg = Message(FlowKind.DATA, 12, 1, 7, 5, payload)
    assert node.on_message(msg, now=6) == "relayed"
    (relayed,) = sent
    assert relayed.payload == payload
    assert relayed.source == 12
    assert relayed.final_dest == 1
    assert relayed.next_hop == 1
    assert node.battery == 1000 - 1 - 3  # rx then tx


def test_unroutable_relay_dropped():
    node, sent = make_node()
    msg = Message(FlowKind.DATA, 12, 99, 7, 5, b"x")
    assert node.on_message(msg, now=6) == "unroutable"
    assert sent == []


def test_message_not_addressed_costs_nothing():
    node, _ = make_node()
    msg = Message(FlowKind.DATA, 12, 99, 42, 5, b"x")
    assert node.on_message(msg, now=6) == "ignored"
    assert node.battery == 1000


def test_start_command_starts_sampling_and_acks():
    node, sent = make_node()
    payload = CommandPayload("start", (rid_param(5),)).encode()
    msg = Message(FlowKind.COMMAND, 1, 7, 7, 3, payload)
    assert node.on_message(msg, now=4) == "command:start"
    assert node.sampling is True
    (ack,) = sent
    assert ack.kind is FlowKind.STATE
    assert ack.final_dest == 1
    decoded = CommandPayload.decode(ack.payload)
    params, rid = split_rid(decoded.params)
    assert decoded.name == "start" and rid == 5 and params == (b"ok",)


def test_commands_after_battery_death_ignored():
    node, sent = make_node(battery=1)
    node.fail()
    payload = CommandPayload("start", ()).encode()
    msg = Message(FlowKind.COMMAND, 1, 7, 7, 3, payload)
    assert node.on_message(msg, now=4) == "absent"
    assert sent == []
    assert not node.sampling


def test_report_state_battery_arithmetic():
    node, sent = make_node(battery=1000)
    for t in range(3):
        node.sample("temp", t)
    report = node.report_state(10)
    assert report is not None
    decoded = CommandPayload.decode(report.payload)
    # oracle: 1000 - 3 samples * cost 2 = 994, minus nothing else yet;
    # the report itself is charged before the payload is built.
    assert decoded.params[0] == b"994"


def test_first_state_report_carries_id_card():
    # Sun-SPOT-shaped card: 16 MHz, 512 KB RAM, 4 MB flash as system memory.
    node = SensorNode(
        node_id=9,
        id_card=IdCard(16, 512, 4096, 1000, "squawk"),
        functions=[temp_function()],
        position=(0.0, 0.0),
        radio_range=10.0,
    )
    node.cu_station = 1
    first = node.report_state(0)
    params = CommandPayload.decode(first.payload).params
    assert params[3:] == (b"16", b"512", b"4096", b"squawk")
    second = node.report_state(25)
    assert len(CommandPayload.decode(second.payload).params) == 3


def test_fresh_node_reports_full_battery():
    node, _ = make_node(battery=1000)
    report = node.report_state(0)
    assert CommandPayload.decode(report.payload).params[0] == b"1000"


def test_energy_ledger_and_absence_monotonicity():
    # 2 per sample + 3 per tx = 5 per cycle; battery 10 dies after 2 cycles.
    node, sent = make_node(battery=10)
    for t in range(2):
        node.sample("temp", t)
        node.transmit_pending(t)
    assert node.battery == 0
    assert node.absent
    before = len(sent)
    assert node.sample("temp", 2) is None
    assert node.report_state(3) is None
    assert node.emit_beacon(4) is None
    assert len(sent) == before
    assert node.initial_battery - sum(node.spent.values()) == node.battery


def test_unaffordable_action_skipped_battery_untouched():
    node, sent = make_node(battery=3)
    node.sample("temp", 0)  # costs 2, leaves 1
    assert node.battery == 1
    assert node.transmit_pending(0) == 0  # tx costs 3 > 1
    assert node.battery == 1
    assert not node.absent
    assert sent == []


def test_memory_accounting_evicts_oldest():
    events = []
    node, _ = make_node(qos_sink=events.append)
    node.id_card.measure_memory_kb = 0  # capacity 0 bytes forces eviction
    node.cu_station = None  # hold everything in memory
    assert node.memory_capacity == 0
    node.inject_reading("temp", b"aaaa", 0)
    node.inject_reading("temp", b"bbbb", 1)
    kinds = {e.kind for e in events}
    assert QoSKind.MEMORY_FULL in kinds


def test_free_memory_decreases_with_buffered_units():
    node, _ = make_node()
    node.cu_station = None
    free_before = node.free_memory
    node.sample("temp", 0)
    assert node.free_memory == free_before - len(b"temperature:0")
    node.cu_station = 1
    node.transmit_pending(1)
    assert node.free_memory == free_before
