"""Flows, temporal units, flow kinds and synchronous-slice arithmetic.

Everything here is a pure value or a pure function over virtual time.
Virtual time is an integer tick count; there is no wall clock anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

from .errors import IncompatiblePeriods, MixedSlices, OversizedSamples, UnknownFlow

# A temporal unit must fit the payload field of one wire message.
MAX_SAMPLES = 60000

MAX_FLOW_ID = 0xFFFF
MAX_TAG = 0xFFFF


class FlowKind(IntEnum):
    """Nature of a flow; the value doubles as the wire kind byte."""

    DATA = 0x00
    STATE = 0x01
    COMMAND = 0x02


@dataclass(frozen=True)
class TemporalUnit:
    """A set of samples plus the virtual-time stamp assigned at creation."""

    flow_id: int
    timestamp: int
    samples: bytes

    def __post_init__(self):
        if not 0 <= self.flow_id <= MAX_FLOW_ID:
            raise UnknownFlow(f"flow id {self.flow_id} outside 16-bit range")
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")
        if len(self.samples) > MAX_SAMPLES:
            raise OversizedSamples(
                f"{len(self.samples)} bytes exceeds the {MAX_SAMPLES}-byte limit"
            )


@dataclass(frozen=True)
class FlowSpec:
    """Descriptor of one typed stream: identity, kind, rate and endpoints.

    ``period`` is the number of ticks covered by one temporal unit; the
    slowest flow of a bundle anchors its synchronous slices.
    ``datatype_tag`` labels the producer's payload encoding and is what
    conduit control units key their transformations on.
    """

    flow_id: int
    kind: FlowKind
    period: int
    producer_id: str
    consumer_ids: tuple[str, ...]
    datatype_tag: int = 0

    def __post_init__(self):
        if not 0 <= self.flow_id <= MAX_FLOW_ID:
            raise UnknownFlow(f"flow id {self.flow_id} outside 16-bit range")
        if self.period < 1:
            raise ValueError(f"period must be >= 1, got {self.period}")
        if not self.consumer_ids:
            raise ValueError(f"flow {self.flow_id} has no consumers")
        if not 0 <= self.datatype_tag <= MAX_TAG:
            raise ValueError(f"datatype tag {self.datatype_tag} outside 16-bit range")


def stamp(samples: bytes, now: int, flow_id: int) -> TemporalUnit:
    """Create a temporal unit stamped with the current virtual time.

    Sources must call this with strictly increasing ``now`` per flow; the
    stamp is immutable afterwards.
    """
    if len(samples) > MAX_SAMPLES:
        raise OversizedSamples(
            f"{len(samples)} bytes exceeds the {MAX_SAMPLES}-byte limit"
        )
    return TemporalUnit(flow_id=flow_id, timestamp=now, samples=bytes(samples))


def anchor_period(bundle: list[FlowSpec]) -> int:
    """The slowest flow's period, which defines the slice width."""
    if not bundle:
        raise ValueError("empty bundle")
    return max(spec.period for spec in bundle)


def validate_bundle(bundle: list[FlowSpec]) -> int:
    """Check slice compatibility of a bundle and return its anchor period.

    Every period must divide the anchor so each slice holds an exact
    integer count of units per flow.
    """
    anchor = anchor_period(bundle)
    seen: set[int] = set()
    for spec in bundle:
        if spec.flow_id in seen:
            raise ValueError(f"flow {spec.flow_id} bundled twice")
        seen.add(spec.flow_id)
        if anchor % spec.period != 0:
            raise IncompatiblePeriods(
                f"period {spec.period} of flow {spec.flow_id} does not divide "
                f"anchor period {anchor}"
            )
    return anchor


def slice_of(tu: TemporalUnit, bundle: list[FlowSpec]) -> int:
    """Index of the synchronous slice a unit belongs to within a bundle."""
    if all(spec.flow_id != tu.flow_id for spec in bundle):
        raise UnknownFlow(f"flow {tu.flow_id} not in bundle")
    return tu.timestamp // anchor_period(bundle)


def expected_slice_counts(bundle: list[FlowSpec]) -> dict[int, int]:
    """Units each flow contributes to one complete slice (anchor / period)."""
    anchor = anchor_period(bundle)
    return {spec.flow_id: anchor // spec.period for spec in bundle}


def slice_complete(tus: list[TemporalUnit], bundle: list[FlowSpec]) -> bool:
    """True iff the units form exactly one full slice of the bundle."""
    expected = expected_slice_counts(bundle)
    indices = {slice_of(tu, bundle) for tu in tus}
    if len(indices) > 1:
        raise MixedSlices(f"units span slices {sorted(indices)}")
    counts: dict[int, int] = {flow_id: 0 for flow_id in expected}
    for tu in tus:
        counts[tu.flow_id] += 1
    return counts == expected


def slice_anchor_timestamp(index: int, bundle: list[FlowSpec]) -> int:
    """First tick of slice ``index``; outputs derived from the slice carry it."""
    return index * anchor_period(bundle)
