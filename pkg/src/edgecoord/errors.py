"""Exception hierarchy shared by all edgecoord modules."""


class EdgeCoordError(Exception):
    """Base class for every error raised by edgecoord."""


class InvalidDescriptor(EdgeCoordError, ValueError):
    pass


class AssetFileError(InvalidDescriptor):
    """An asset document on disk failed validation."""

    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


class UnknownThing(EdgeCoordError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownJob(EdgeCoordError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ChannelTimeout(EdgeCoordError):
    pass


class ServiceNotFound(EdgeCoordError):
    """A scanning client saw a full beacon rotation without its wanted ids."""


class NoViableSensor(EdgeCoordError):
    pass


class NoExecutor(EdgeCoordError):
    pass


class UnfittedProfile(EdgeCoordError):
    pass


class InsufficientData(EdgeCoordError, ValueError):
    pass


class StalePlan(EdgeCoordError):
    pass


class SensorUnavailable(EdgeCoordError):
    pass


class ModuleMissing(EdgeCoordError):
    pass


class UnknownSegment(EdgeCoordError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class HorizonExceeded(EdgeCoordError):
    pass


class ConfigError(EdgeCoordError, ValueError):
    """Bad configuration; ``key`` names the offending dotted key."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class ScenarioError(EdgeCoordError):
    """A benchmark repetition failed; ``milestone`` names where."""

    def __init__(self, scenario, milestone, cause):
        self.scenario = scenario
        self.milestone = milestone
        self.cause = cause
        super().__init__(f"scenario {scenario!r} failed at milestone {milestone!r}: {cause}")


class InvalidTransition(EdgeCoordError):
    """A client session was asked to move along an edge its state machine lacks."""
