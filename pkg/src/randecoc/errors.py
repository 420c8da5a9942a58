"""Exception types raised across the package."""


class RandecocError(Exception):
    """Base class for package errors."""


class DimensionError(RandecocError, ValueError):
    pass


class TrainingError(RandecocError, ValueError):
    pass


class FormatError(RandecocError, ValueError):
    """Malformed IDX/CSV/JSON input."""


class ProtocolError(RandecocError, RuntimeError):
    """An attacker or oracle broke the query protocol."""


class ConfigError(RandecocError, ValueError):
    pass
