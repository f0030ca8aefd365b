"""Exception types shared across the package."""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class InvalidGeometryError(SimulationError, ValueError):
    """Region placement or parameters are physically meaningless."""


class ConfigError(SimulationError, ValueError):
    """A configuration value violates its constraints."""


class CorruptedStateError(SimulationError):
    """Particle state became non-finite; the run must abort."""
