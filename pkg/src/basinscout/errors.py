"""Exception types shared across the package."""


class BasinscoutError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BasinscoutError):
    """Invalid grid, parameter set, system definition, or run config."""


class ConsistencyError(BasinscoutError):
    """An internal invariant was violated (e.g. stray transient marks)."""


class DivergedNumerically(BasinscoutError):
    """The integrator produced a non-finite state or its step size underflowed."""


class AutoDtFailed(BasinscoutError):
    """The automatic step-size heuristic found no usable samples."""
