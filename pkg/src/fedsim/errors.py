"""Exception hierarchy shared across the simulator."""


class FedsimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(FedsimError):
    """Invalid configuration, plan, or scenario input."""


class ProtocolError(FedsimError):
    """Violation of an aggregation or versioning contract."""


class SimulationError(FedsimError):
    """A run cannot make progress (e.g. no client ever participates)."""


class IncompleteLogError(FedsimError):
    """A metrics log is truncated or internally inconsistent."""
