"""Trace records: the canonical, diffable output of every run.

One record per line. Text form is ``t=<ticks> <KIND> <key>=<value>...``
with a stable field order per emit site; the jsonl form keeps the same
order. Values are rendered canonically so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable


def _render(value: object) -> str:
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        # Positions come from scenario text; keep integral values short.
        return str(int(value)) if value == int(value) else repr(value)
    return str(value)


@dataclass(frozen=True)
class TraceRecord:
    time: int
    kind: str
    fields: tuple[tuple[str, object], ...]

    def to_text(self) -> str:
        parts = [f"t={self.time}", self.kind]
        parts.extend(f"{key}={_render(value)}" for key, value in self.fields)
        return " ".join(parts)

    def to_json(self) -> str:
        doc: dict[str, object] = {"t": self.time, "kind": self.kind}
        for key, value in self.fields:
            doc[key] = value.hex() if isinstance(value, bytes) else value
        return json.dumps(doc, separators=(",", ":"))


class Tracer:
    """Collects records in execution order and optionally streams them."""

    def __init__(self, sink: Callable[[TraceRecord], None] | None = None):
        self.records: list[TraceRecord] = []
        self._sink = sink

    def emit(self, time: int, kind: str, *fields: tuple[str, object]) -> TraceRecord:
        record = TraceRecord(time=time, kind=kind, fields=tuple(fields))
        self.records.append(record)
        if self._sink is not None:
            self._sink(record)
        return record

    def count(self, kind: str) -> int:
        return sum(1 for record in self.records if record.kind == kind)

    def of_kind(self, kind: str) -> list[TraceRecord]:
        return [record for record in self.records if record.kind == kind]


def write_trace(records: Iterable[TraceRecord], path: str, fmt: str = "text") -> None:
    if fmt not in ("text", "jsonl"):
        raise ValueError(f"unknown trace format {fmt!r}")
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            line = record.to_text() if fmt == "text" else record.to_json()
            handle.write(line + "\n")
