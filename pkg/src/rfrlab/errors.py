"""Exception hierarchy shared by every module."""


class RfrError(Exception):
    """Base class for library errors."""


class DomainError(RfrError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericalError(RfrError, ArithmeticError):
    """Quadrature or integration failed to reach the requested accuracy."""


class ConfigurationError(RfrError, ValueError):
    """Inconsistent model, grid or instrument configuration."""


class DataError(RfrError, ValueError):
    """Missing or incomplete market/path data."""


class CalibrationError(RfrError):
    """A curve fit could not be completed."""

    def __init__(self, message: str, pillar: float | None = None):
        super().__init__(message)
        self.pillar = pillar
