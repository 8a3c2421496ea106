"""Exception types shared across the package."""

from __future__ import annotations


class DsopError(Exception):
    """Base class for all package-specific errors."""


class InstanceFormatError(DsopError):
    """Raised when an instance file cannot be parsed or fails validation."""


class ConfigurationError(DsopError):
    """Raised for unusable configuration, e.g. a grid that cannot align with band boundaries."""


class UnsupportedDistributionError(DsopError):
    """Raised when an operation requires a distribution family it does not support."""


class EnumerationLimitError(DsopError):
    """Raised when exact enumeration would exceed the configured outcome cap."""


class GenerationError(DsopError):
    """Raised when an instance generator cannot satisfy its contract."""


class NoFeasibleSolution(DsopError):
    """Raised when not even the bare start-exit path meets the chance constraint."""


class SolverTimeout(DsopError):
    """Raised when a solver exhausts its resource budget.

    Carries the best solution found so far in ``best`` (may be ``None``).
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best
