"""Exception types shared across the package."""


class DomainError(ValueError):
    """A metric is undefined for the given state (e.g. entropy of an empty stream)."""


class GeometryMismatch(ValueError):
    """Two sketches or histograms cannot be combined."""


class StaleSnapshot(ValueError):
    """A controller received a snapshot no newer than one it already processed."""


class NotYetAvailable(LookupError):
    """A global estimate was requested before any sync round completed."""


class CapacityError(ValueError):
    """More attributes were requested than the sketch geometry has dimensions."""


class UnknownMetric(ValueError):
    pass


class ConfigError(ValueError):
    """Invalid run configuration; ``block`` names the offending section."""

    def __init__(self, message: str, block: str | None = None, field: str | None = None):
        super().__init__(message)
        self.block = block
        self.field = field
