"""Quality-of-service events raised by runtime entities for the platform."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class QoSKind(Enum):
    SENSOR_ABSENT = "sensor_absent"
    SLICE_ABANDONED = "slice_abandoned"
    BATTERY_LOW = "battery_low"
    MEMORY_FULL = "memory_full"
    NODE_MOVED = "node_moved"
    NODE_DOWN = "node_down"


@dataclass(frozen=True)
class QoSEvent:
    """One supervision-worthy incident: what, who, when, plus details."""

    kind: QoSKind
    subject: str
    time: int
    detail: tuple[tuple[str, object], ...] = ()

    def detail_dict(self) -> dict[str, object]:
        return dict(self.detail)
