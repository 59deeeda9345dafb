"""Line-oriented scenario files: declarations plus a timed script.

One declaration or action per line, ``#`` starts a comment. Parsing
reports the first problem with its 1-based line number; formatting emits
the canonical form, so parse(format(parse(text))) == parse(text).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import NonMonotonicScript, ScenarioSyntaxError, UndeclaredId


@dataclass(frozen=True)
class StationDecl:
    name: str
    x: float
    y: float
    range: float


@dataclass(frozen=True)
class SensorDecl:
    name: str
    x: float
    y: float
    range: float
    battery: int
    mhz: int
    mem_kb: int
    os: str


@dataclass(frozen=True)
class FunctionDecl:
    sensor: str
    kind: str
    period: int
    flow: str
    tag: int


@dataclass(frozen=True)
class BcDecl:
    name: str
    station: str
    consumes: tuple[tuple[str, int | None], ...]  # (flow, expected tag or None)
    produces: str
    period: int
    tag: int


@dataclass(frozen=True)
class TransformDecl:
    from_tag: int
    to_tag: int
    builtin: str


@dataclass(frozen=True)
class ConnectDecl:
    source: str
    target: str
    flows: tuple[str, ...]


@dataclass(frozen=True)
class ScriptAction:
    time: int
    kind: str  # move | fail | stimulus | command
    args: tuple[str, ...]


@dataclass(frozen=True)
class RadioDecl:
    latency: int = 1
    loss: float = 0.0


@dataclass
class Scenario:
    stations: list[StationDecl] = field(default_factory=list)
    sensors: list[SensorDecl] = field(default_factory=list)
    functions: list[FunctionDecl] = field(default_factory=list)
    bcs: list[BcDecl] = field(default_factory=list)
    transforms: list[TransformDecl] = field(default_factory=list)
    connects: list[ConnectDecl] = field(default_factory=list)
    script: list[ScriptAction] = field(default_factory=list)
    radio: RadioDecl = field(default_factory=RadioDecl)

    def flow_names(self) -> list[str]:
        names = [f.flow for f in self.functions]
        names.extend(b.produces for b in self.bcs)
        return names


class _Cursor:
    """Sequential token reader with line-anchored errors."""

    def __init__(self, tokens: list[str], lineno: int):
        self.tokens = tokens
        self.lineno = lineno
        self.pos = 0

    def take(self, what: str) -> str:
        if self.pos >= len(self.tokens):
            raise ScenarioSyntaxError(self.lineno, f"missing {what}")
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def keyword(self, keyword: str) -> None:
        token = self.take(f"keyword {keyword!r}")
        if token != keyword:
            raise ScenarioSyntaxError(
                self.lineno, f"expected {keyword!r}, got {token!r}"
            )

    def number(self, what: str) -> float:
        token = self.take(what)
        try:
            return float(token)
        except ValueError:
            raise ScenarioSyntaxError(
                self.lineno, f"{what} must be a number, got {token!r}"
            ) from None

    def integer(self, what: str) -> int:
        token = self.take(what)
        try:
            return int(token)
        except ValueError:
            raise ScenarioSyntaxError(
                self.lineno, f"{what} must be an integer, got {token!r}"
            ) from None

    def rest(self) -> list[str]:
        remaining = self.tokens[self.pos :]
        self.pos = len(self.tokens)
        return remaining

    def done(self) -> None:
        if self.pos != len(self.tokens):
            raise ScenarioSyntaxError(
                self.lineno, f"unexpected trailing tokens {self.tokens[self.pos:]!r}"
            )


def _parse_consumes(spec: str, lineno: int) -> tuple[tuple[str, int | None], ...]:
    out: list[tuple[str, int | None]] = []
    for item in spec.split(","):
        if not item:
            raise ScenarioSyntaxError(lineno, "empty flow name in consumes list")
        if ":" in item:
            name, _, tag = item.partition(":")
            try:
                out.append((name, int(tag)))
            except ValueError:
                raise ScenarioSyntaxError(
                    lineno, f"bad consumer tag in {item!r}"
                ) from None
        else:
            out.append((item, None))
    return tuple(out)


def parse_scenario(text: str) -> Scenario:
    scenario = Scenario()
    components: set[str] = set()
    sensors: set[str] = set()
    stations: set[str] = set()
    flows: set[str] = set()
    last_time = 0

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cursor = _Cursor(line.split(), lineno)
        head = cursor.take("declaration")

        if head == "station":
            name = cursor.take("station name")
            cursor.keyword("pos")
            x = cursor.number("x")
            y = cursor.number("y")
            cursor.keyword("range")
            rng = cursor.number("range")
            cursor.done()
            if name in components:
                raise ScenarioSyntaxError(lineno, f"{name!r} declared twice")
            scenario.stations.append(StationDecl(name, x, y, rng))
            components.add(name)
            stations.add(name)

        elif head == "sensor":
            name = cursor.take("sensor name")
            cursor.keyword("pos")
            x = cursor.number("x")
            y = cursor.number("y")
            cursor.keyword("range")
            rng = cursor.number("range")
            cursor.keyword("battery")
            battery = cursor.integer("battery")
            cursor.keyword("mhz")
            mhz = cursor.integer("mhz")
            cursor.keyword("mem")
            mem = cursor.integer("mem")
            cursor.keyword("os")
            os_label = cursor.take("os label")
            cursor.done()
            if name in components:
                raise ScenarioSyntaxError(lineno, f"{name!r} declared twice")
            scenario.sensors.append(
                SensorDecl(name, x, y, rng, battery, mhz, mem, os_label)
            )
            components.add(name)
            sensors.add(name)

        elif head == "function":
            sensor = cursor.take("sensor name")
            kind = cursor.take("function kind")
            cursor.keyword("period")
            period = cursor.integer("period")
            cursor.keyword("flow")
            flow = cursor.take("flow name")
            cursor.keyword("tag")
            tag = cursor.integer("tag")
            cursor.done()
            if sensor not in sensors:
                raise UndeclaredId(lineno, f"sensor {sensor!r} not declared")
            if flow in flows:
                raise ScenarioSyntaxError(lineno, f"flow {flow!r} declared twice")
            scenario.functions.append(FunctionDecl(sensor, kind, period, flow, tag))
            flows.add(flow)

        elif head == "bc":
            name = cursor.take("component name")
            cursor.keyword("on")
            station = cursor.take("station name")
            cursor.keyword("consumes")
            consumes = _parse_consumes(cursor.take("consumed flows"), lineno)
            cursor.keyword("produces")
            produces = cursor.take("produced flow")
            cursor.keyword("period")
            period = cursor.integer("period")
            cursor.keyword("tag")
            tag = cursor.integer("tag")
            cursor.done()
            if name in components:
                raise ScenarioSyntaxError(lineno, f"{name!r} declared twice")
            if station not in stations:
                raise UndeclaredId(lineno, f"station {station!r} not declared")
            for flow, _ in consumes:
                if flow not in flows:
                    raise UndeclaredId(lineno, f"flow {flow!r} not declared")
            if produces in flows:
                raise ScenarioSyntaxError(lineno, f"flow {produces!r} declared twice")
            scenario.bcs.append(BcDecl(name, station, consumes, produces, period, tag))
            components.add(name)
            flows.add(produces)

        elif head == "transform":
            from_tag = cursor.integer("from tag")
            to_tag = cursor.integer("to tag")
            builtin = cursor.take("builtin name")
            cursor.done()
            scenario.transforms.append(TransformDecl(from_tag, to_tag, builtin))

        elif head == "connect":
            source = cursor.take("source component")
            cursor.keyword("->")
            target = cursor.take("target component")
            cursor.keyword("flows")
            flow_list = tuple(cursor.take("flow list").split(","))
            cursor.done()
            if source not in components:
                raise UndeclaredId(lineno, f"{source!r} not declared")
            if target not in components:
                raise UndeclaredId(lineno, f"{target!r} not declared")
            if target not in {b.name for b in scenario.bcs}:
                raise ScenarioSyntaxError(
                    lineno, f"connect target {target!r} must be a software component"
                )
            for flow in flow_list:
                if flow not in flows:
                    raise UndeclaredId(lineno, f"flow {flow!r} not declared")
            scenario.connects.append(ConnectDecl(source, target, flow_list))

        elif head == "radio":
            latency = scenario.radio.latency
            loss = scenario.radio.loss
            while cursor.pos < len(cursor.tokens):
                key = cursor.take("radio setting")
                if key == "latency":
                    latency = cursor.integer("latency")
                elif key == "loss":
                    loss = cursor.number("loss")
                else:
                    raise ScenarioSyntaxError(lineno, f"unknown radio setting {key!r}")
            scenario.radio = RadioDecl(latency=latency, loss=loss)

        elif head == "at":
            time = cursor.integer("time")
            if time < last_time:
                raise NonMonotonicScript(
                    lineno, f"script time {time} precedes {last_time}"
                )
            last_time = time
            action = cursor.take("action")
            if action == "move":
                target = cursor.take("sensor name")
                x = cursor.take("x")
                y = cursor.take("y")
                cursor.done()
                _is_number(x, lineno, "x")
                _is_number(y, lineno, "y")
                args = (target, x, y)
            elif action == "fail":
                args = (cursor.take("node name"),)
                cursor.done()
            elif action == "stimulus":
                target = cursor.take("sensor name")
                payload = cursor.take("hex payload")
                cursor.done()
                _check_hex(payload, lineno)
                args = (target, payload)
            elif action == "command":
                target = cursor.take("target name")
                name = cursor.take("command name")
                params = tuple(cursor.rest())
                for param in params:
                    _check_hex(param, lineno)
                args = (target, name, *params)
            else:
                raise ScenarioSyntaxError(lineno, f"unknown script action {action!r}")
            subject = args[0]
            if subject not in components:
                raise UndeclaredId(lineno, f"{subject!r} not declared")
            scenario.script.append(ScriptAction(time, action, args))

        else:
            raise ScenarioSyntaxError(lineno, f"unknown declaration {head!r}")

    return scenario


def _is_number(token: str, lineno: int, what: str) -> bool:
    try:
        float(token)
    except ValueError:
        raise ScenarioSyntaxError(
            lineno, f"{what} must be a number, got {token!r}"
        ) from None
    return True


def _check_hex(token: str, lineno: int) -> None:
    try:
        bytes.fromhex(token)
    except ValueError:
        raise ScenarioSyntaxError(lineno, f"bad hex string {token!r}") from None


def _fmt_num(value: float) -> str:
    return str(int(value)) if value == int(value) else repr(value)


def format_scenario(scenario: Scenario) -> str:
    """Canonical text form; parses back to an equal Scenario."""
    lines: list[str] = []
    if scenario.radio != RadioDecl():
        lines.append(
            f"radio latency {scenario.radio.latency} loss {_fmt_num(scenario.radio.loss)}"
        )
    for s in scenario.stations:
        lines.append(
            f"station {s.name} pos {_fmt_num(s.x)} {_fmt_num(s.y)} range {_fmt_num(s.range)}"
        )
    for s in scenario.sensors:
        lines.append(
            f"sensor {s.name} pos {_fmt_num(s.x)} {_fmt_num(s.y)} "
            f"range {_fmt_num(s.range)} battery {s.battery} mhz {s.mhz} "
            f"mem {s.mem_kb} os {s.os}"
        )
    for f in scenario.functions:
        lines.append(
            f"function {f.sensor} {f.kind} period {f.period} flow {f.flow} tag {f.tag}"
        )
    for b in scenario.bcs:
        consumed = ",".join(
            name if tag is None else f"{name}:{tag}" for name, tag in b.consumes
        )
        lines.append(
            f"bc {b.name} on {b.station} consumes {consumed} produces {b.produces} "
            f"period {b.period} tag {b.tag}"
        )
    for t in scenario.transforms:
        lines.append(f"transform {t.from_tag} {t.to_tag} {t.builtin}")
    for c in scenario.connects:
        lines.append(f"connect {c.source} -> {c.target} flows {','.join(c.flows)}")
    for action in scenario.script:
        lines.append(f"at {action.time} {action.kind} {' '.join(action.args)}")
    return "\n".join(lines) + "\n"
