"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line entry point can map
failures onto its stable exit-code contract (1 validation, 2 numeric,
3 transport, 4 I/O).
"""

from __future__ import annotations


class LLMPriorError(Exception):
    exit_code = 1


# -- validation (exit 1) -----------------------------------------------------

class ValidationError(LLMPriorError, ValueError):
    """Input does not satisfy a documented precondition."""


class ArgumentError(ValidationError):
    pass


class SchemaError(ValidationError):
    """A file does not match its schema. ``field`` names the offending path."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class EmptyDataError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class CatalogParseError(ValidationError):
    """Malformed JSON; ``line`` and ``column`` point at the failure."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ParseError(ValidationError):
    """No usable prior sets could be read from an LLM response.

    The raw text is kept on the exception so it can be saved for manual entry.
    """

    def __init__(self, message: str, raw: str = "", missing: tuple[str, ...] = ()):
        super().__init__(message)
        self.raw = raw
        self.missing = missing


class UndefinedMetricError(ValidationError):
    pass


class FoldError(ValidationError):
    def __init__(self, message: str, fold: int):
        super().__init__(f"fold {fold}: {message}")
        self.fold = fold


# -- numeric (exit 2) --------------------------------------------------------

class NumericError(LLMPriorError, ArithmeticError):
    exit_code = 2


class SingularMatrixError(NumericError):
    pass


class NonConvergenceError(NumericError):
    """Iterative fit failed.

    ``cause`` is ``"max_iter"`` when the iteration cap was hit and
    ``"separation"`` when the coefficients diverged (quasi-complete separation).
    """

    def __init__(self, message: str, cause: str, iterations: int = 0):
        super().__init__(message)
        self.cause = cause
        self.iterations = iterations


class DegenerateDataError(NumericError):
    """Zero residual variance. ``coefficients`` still holds the exact fit."""

    def __init__(self, message: str, coefficients=None):
        super().__init__(message)
        self.coefficients = coefficients


class BootstrapFailureError(NumericError):
    pass


# -- transport (exit 3) ------------------------------------------------------

class TransportError(LLMPriorError):
    exit_code = 3

    def __init__(self, message: str, status: int | None = None, body: str = "",
                 attempts: int = 0):
        super().__init__(message)
        self.status = status
        self.body = body
        self.attempts = attempts


class AuthError(TransportError):
    pass


class EmptyResponseError(TransportError):
    pass
