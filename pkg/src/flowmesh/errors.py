"""Exception hierarchy shared by all flowmesh modules."""


class FlowmeshError(Exception):
    """Base class for every error raised by this package."""


class OversizedSamples(FlowmeshError):
    """A temporal unit's sample payload exceeds the wire limit."""


class UnknownFlow(FlowmeshError):
    """A flow id is not part of the bundle or port it was used with."""


class MixedSlices(FlowmeshError):
    """A set of temporal units spans more than one synchronous slice."""


class IncompatiblePeriods(FlowmeshError):
    """A bundled flow's period does not divide the anchor period."""


class DirectionMismatch(FlowmeshError):
    """A conduit was connected output-to-output or input-to-input."""


class DuplicateTransform(FlowmeshError):
    """A (from_tag, to_tag) pair is already registered."""


class UnknownTransform(FlowmeshError):
    """No transformation is registered for a required tag pair."""


class IllegalTransition(FlowmeshError):
    """A lifecycle command is not legal from the current state."""


class UnknownFunction(FlowmeshError):
    """A sensor was asked to sample a function it does not have."""


class UnknownNode(FlowmeshError):
    """An operation referenced a node id the network does not know."""


class NameTooLong(FlowmeshError):
    """A command name does not fit the 1..255 byte wire field."""


class TooManyParams(FlowmeshError):
    """A command carries more than 255 parameters."""


class CodecError(FlowmeshError):
    """A wire message or payload could not be encoded or decoded."""


class Unreachable(FlowmeshError):
    """No relay path exists between two nodes."""


class NoReachableStation(FlowmeshError):
    """No station covers a sensor, directly or through relays."""


class StationDown(FlowmeshError):
    """The target station of a migration is not live."""


class ScenarioError(FlowmeshError):
    """Scenario file problem, carrying the 1-based offending line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ScenarioSyntaxError(ScenarioError):
    pass


class UndeclaredId(ScenarioError):
    pass


class NonMonotonicScript(ScenarioError):
    pass
