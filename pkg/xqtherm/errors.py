from collections.abc import Mapping
from typing import Any


class ThermometryError(Exception):
    """Base class for all errors raised by ``xqtherm``"""


class DomainError(ThermometryError, ValueError):
    """a numeric precondition is violated (negative frequency, β ≤ 0, ...)"""


class ContractError(ThermometryError, ValueError):
    """an operation was called outside of the regime it is defined for"""


class ConfigError(ThermometryError, ValueError):
    """invalid run configuration

    Parameters
    ----------
    field : str
        Name of the offending configuration field.
    message : str
        Human readable description.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class NumericalError(ThermometryError, ArithmeticError):
    """a numerical procedure failed to converge

    Parameters
    ----------
    message : str
        Description of the failure.
    diagnostics : mapping, optional
        Additional information about the failing computation (integration
        limits, error estimates, ...).
    """

    def __init__(self, message: str, diagnostics: Mapping[str, Any] | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})

    def __str__(self) -> str:
        if not self.diagnostics:
            return self.args[0]

        details = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
        return f"{self.args[0]} ({details})"


EXIT_SUCCESS = 0
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3
