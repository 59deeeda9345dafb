"""Built-in business components shipped for the demo scenarios."""

from __future__ import annotations

from typing import Callable

from .flows import FlowSpec, TemporalUnit
from .processor import BusinessComponent
from .supervision import dist2

# Named byte-level transformations a scenario's transform catalog can use.
BUILTIN_TRANSFORMS: dict[str, Callable[[bytes], bytes]] = {
    "identity": lambda data: data,
    "div10": lambda data: bytes(value // 10 for value in data),
}


class Mixer(BusinessComponent):
    """Merges the consumed flows of each slice into one unit.

    Output samples are the input samples joined in (timestamp, flow)
    order, so mixing is reproducible byte for byte.
    """

    def process(self, tus: list[TemporalUnit], anchor_ts: int) -> list[TemporalUnit]:
        ordered = sorted(tus, key=lambda tu: (tu.timestamp, tu.flow_id))
        merged = b"|".join(tu.samples for tu in ordered)
        return [
            TemporalUnit(spec.flow_id, anchor_ts, merged) for spec in self.produces
        ]


class MotionAnalyzer(BusinessComponent):
    """Turns intrusion readings into start commands for nearby cameras.

    The probable-trajectory analysis is approximated: the camera nearest
    to the detecting sensor is started, plus the next camera along the
    line from the sensor through that camera, when one exists. Ties go to
    the lowest node id.
    """

    def __init__(
        self,
        bc_id: str,
        consumes,
        produces,
        *,
        flow_source: dict[int, str],
        locate: Callable[[str], tuple[float, float]],
        cameras: Callable[[], list[tuple[int, str, tuple[float, float]]]],
    ):
        super().__init__(bc_id, consumes, produces)
        self.flow_source = flow_source
        self.locate = locate
        self.cameras = cameras

    def process(self, tus: list[TemporalUnit], anchor_ts: int) -> list[TemporalUnit]:
        alerts: list[bytes] = []
        for tu in sorted(tus, key=lambda tu: (tu.timestamp, tu.flow_id)):
            source = self.flow_source.get(tu.flow_id)
            if source is None:
                continue
            origin = self.locate(source)
            targets = self._select_cameras(origin)
            for label in targets:
                self.request_command(label, "start")
                alerts.append(f"{source}->{label}".encode())
        if not alerts:
            return []
        return [
            TemporalUnit(spec.flow_id, anchor_ts, b";".join(alerts))
            for spec in self.produces
        ]

    def _select_cameras(self, origin: tuple[float, float]) -> list[str]:
        cameras = self.cameras()
        if not cameras:
            return []
        nearest_id, nearest_label, nearest_pos = min(
            cameras, key=lambda cam: (dist2(cam[2], origin), cam[0])
        )
        targets = [nearest_label]
        # Next camera on the line: beyond the nearest one, same direction.
        dx = nearest_pos[0] - origin[0]
        dy = nearest_pos[1] - origin[1]
        follow = [
            cam
            for cam in cameras
            if cam[0] != nearest_id
            and (cam[2][0] - nearest_pos[0]) * dx + (cam[2][1] - nearest_pos[1]) * dy > 0
        ]
        if follow:
            def line_key(cam):
                px = cam[2][0] - origin[0]
                py = cam[2][1] - origin[1]
                cross = px * dy - py * dx
                return (cross * cross, cam[0])

            _, label, _ = min(follow, key=line_key)
            targets.append(label)
        return targets


def make_builtin(
    name: str,
    consumes,
    produces: list[FlowSpec],
    *,
    analyzer_kwargs: dict | None = None,
) -> BusinessComponent:
    """Instantiate the built-in selected by the component's name prefix."""
    if name.startswith("motion-analyzer"):
        return MotionAnalyzer(name, consumes, produces, **(analyzer_kwargs or {}))
    if name.startswith("mixer"):
        return Mixer(name, consumes, produces)
    raise ValueError(
        f"software component {name!r} matches no built-in "
        "(expected a mixer* or motion-analyzer* name)"
    )
