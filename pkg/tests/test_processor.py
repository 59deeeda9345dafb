import random

import pytest

from flowmesh.connector import CommandPayload
from flowmesh.errors import IllegalTransition
from flowmesh.events import QoSKind
from flowmesh.flows import FlowKind, FlowSpec, TemporalUnit
from flowmesh.processor import (
    BusinessComponent,
    ElementaryProcessor,
    EpState,
    LifecycleCommand,
    Route,
    SensorProxy,
)


def flow(flow_id, period=1, kind=FlowKind.DATA):
    return FlowSpec(flow_id, kind, period, "p", ("c",))


VIDEO = flow(1, period=3)
AUDIO = flow(2, period=1)
MIXED = flow(5, period=3)


class Doubler(BusinessComponent):
    """Consumes audio, emits one unit per slice with doubled bytes."""

    def __init__(self):
        super().__init__("doubler", consumes={AUDIO.flow_id}, produces=[MIXED])

    def process(self, tus, anchor_ts):
        merged = b"".join(tu.samples for tu in tus)
        return [TemporalUnit(MIXED.flow_id, anchor_ts, merged * 2)]


def make_ep(hosted=None, bundle=None, **kwargs):
    outputs = []
    ep = ElementaryProcessor(
        "ep1",
        station_id=1,
        hosted=hosted or Doubler(),
        input_bundle=bundle or [VIDEO, AUDIO],
        output_sink=outputs.append,
        **kwargs,
    )
    return ep, outputs


def slice_units(index):
    base = index * 3
    return [
        TemporalUnit(1, base, f"v{index}".encode()),
        TemporalUnit(2, base, b"a0"),
        TemporalUnit(2, base + 1, b"a1"),
        TemporalUnit(2, base + 2, b"a2"),
    ]


def started(ep, now=0):
    ep.lifecycle(LifecycleCommand.INIT, now)
    ep.lifecycle(LifecycleCommand.START, now)
    return ep


# -- lifecycle -------------------------------------------------------------


def test_init_from_created():
    ep, _ = make_ep()
    assert ep.lifecycle(LifecycleCommand.INIT, 0) is EpState.INITIALIZED
    assert ep.hosted.init_count == 1


def test_start_from_created_illegal():
    ep, _ = make_ep()
    with pytest.raises(IllegalTransition):
        ep.lifecycle(LifecycleCommand.START, 0)


def test_stop_invokes_hook_once():
    ep, _ = make_ep()
    started(ep)
    ep.lifecycle(LifecycleCommand.STOP, 5)
    assert ep.state is EpState.STOPPED
    assert ep.hosted.stop_count == 1


def test_restart_from_stopped():
    ep, _ = make_ep()
    started(ep)
    ep.lifecycle(LifecycleCommand.STOP, 5)
    assert ep.lifecycle(LifecycleCommand.START, 6) is EpState.RUNNING
    assert ep.hosted.start_count == 2


def test_hook_counts_match_command_sequence():
    ep, _ = make_ep()
    commands = [
        LifecycleCommand.INIT,
        LifecycleCommand.START,
        LifecycleCommand.STOP,
        LifecycleCommand.START,
        LifecycleCommand.STOP,
    ]
    for i, command in enumerate(commands):
        ep.lifecycle(command, i)
    assert ep.hosted.init_count == 1
    assert ep.hosted.start_count == 2
    assert ep.hosted.stop_count == 2


def test_state_tu_emitted_on_transition():
    state_flow = flow(9, kind=FlowKind.STATE)
    ep, _ = make_ep(state_flow=state_flow)
    ep.lifecycle(LifecycleCommand.INIT, 3)
    (tu,) = ep.cu.state_outbox
    assert tu.flow_id == 9
    assert tu.timestamp == 3
    assert tu.samples == b"initialized"


# -- classification ----------------------------------------------------------


def test_classify_consumed_data_flow():
    ep, _ = make_ep()
    assert ep.cu.classify(AUDIO) is Route.TO_BC


def test_classify_unconsumed_data_flow_passthrough():
    ep, _ = make_ep()
    assert ep.cu.classify(VIDEO) is Route.PASS_THROUGH


def test_classify_command_flow():
    ep, _ = make_ep()
    assert ep.cu.classify(flow(3, kind=FlowKind.COMMAND)) is Route.TO_CU


def test_classify_state_flow():
    ep, _ = make_ep()
    assert ep.cu.classify(flow(4, kind=FlowKind.STATE)) is Route.TO_PLATFORM


def test_classify_total_over_kinds():
    ep, _ = make_ep()
    for kind in FlowKind:
        assert ep.cu.classify(flow(6, kind=kind)) in Route


# -- slice processing --------------------------------------------------------


def test_passthrough_byte_identical_and_bc_output_anchored():
    ep, outputs = make_ep()
    started(ep)
    for tu in slice_units(0):
        ep.receive(tu, now=tu.timestamp)
    video_out = [tu for tu in outputs if tu.flow_id == 1]
    mixed_out = [tu for tu in outputs if tu.flow_id == 5]
    assert video_out == [TemporalUnit(1, 0, b"v0")]  # untouched bytes and ts
    assert mixed_out == [TemporalUnit(5, 0, b"a0a1a2" * 2)]


def test_pure_relay_ep_identity():
    proxy = SensorProxy("s", produces=[VIDEO, AUDIO])
    ep, outputs = make_ep(hosted=proxy)
    started(ep)
    units = slice_units(0)
    for tu in units:
        ep.receive(tu, now=tu.timestamp)
    assert outputs == sorted(units, key=lambda t: (t.timestamp, t.flow_id))


def test_slice_buffered_while_stopped_processed_on_start():
    ep, outputs = make_ep(slice_timeout=100)
    ep.lifecycle(LifecycleCommand.INIT, 0)
    for tu in slice_units(0):
        ep.receive(tu, now=tu.timestamp)
    assert outputs == []
    ep.lifecycle(LifecycleCommand.START, 4)
    assert len(outputs) == 2  # passthrough video + one mixed unit


def test_held_slice_expires_with_qos_event():
    events = []
    ep, outputs = make_ep(slice_timeout=10, qos_sink=events.append)
    ep.lifecycle(LifecycleCommand.INIT, 0)
    for tu in slice_units(0):
        ep.receive(tu, now=tu.timestamp)
    ep.check_deadlines(now=50)
    ep.lifecycle(LifecycleCommand.START, 51)
    assert outputs == []
    assert any(e.kind is QoSKind.SLICE_ABANDONED for e in events)


def test_command_tu_never_reaches_bc():
    seen_by_bc = []

    class Spy(BusinessComponent):
        def __init__(self):
            super().__init__("spy", consumes={2}, produces=[])

        def process(self, tus, anchor_ts):
            seen_by_bc.extend(tus)
            return []

    command_flow = flow(8, kind=FlowKind.COMMAND)
    ep, _ = make_ep(hosted=Spy(), bundle=[AUDIO, command_flow])
    started(ep)
    payload = CommandPayload("stop").encode()
    ep.receive(TemporalUnit(8, 0, payload), now=0)
    assert ep.state is EpState.STOPPED  # consumed by the CU
    assert all(tu.flow_id != 8 for tu in seen_by_bc)
    assert len(ep.cu.command_inbox) == 1


def test_sync_preservation_over_randomized_schedules():
    # Over 100+ slices with randomized in-slice arrival order, every BC
    # output lands in the slice that produced it.
    rng = random.Random(42)
    ep, outputs = make_ep()
    started(ep)
    n_slices = 120
    for index in range(n_slices):
        units = slice_units(index)
        rng.shuffle(units)
        for tu in units:
            ep.receive(tu, now=tu.timestamp)
    mixed = [tu for tu in outputs if tu.flow_id == 5]
    assert len(mixed) == n_slices
    for index, tu in enumerate(mixed):
        assert tu.timestamp // 3 == index
    video = [tu for tu in outputs if tu.flow_id == 1]
    assert [tu.samples for tu in video] == [f"v{k}".encode() for k in range(n_slices)]
