"""Exception hierarchy shared by every module of the toolkit."""


class EitError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class EitValidationError(EitError, ValueError):
    """Inputs violate a documented precondition."""

    exit_code = 2


class EitNumericError(EitError, ArithmeticError):
    """A numeric procedure could not produce a trustworthy result."""

    exit_code = 3


# Validation family


class InvalidParams(EitValidationError):
    pass


class InvalidWidth(EitValidationError):
    pass


class NonUniformGrid(EitValidationError):
    pass


class AllZero(EitValidationError):
    pass


class NegativeDensity(EitValidationError):
    pass


class InvalidDepth(EitValidationError):
    pass


class EmptyWindow(EitValidationError):
    pass


class GridMismatch(EitValidationError):
    pass


class AmbiguousSelection(EitValidationError):
    pass


class ParseError(EitValidationError):
    """Config text could not be parsed; carries line and column when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        location = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{location}")


class ValidationError(EitValidationError):
    """Config parsed but failed schema validation; `fields` names the offenders."""

    def __init__(self, message: str, fields: list[str] | None = None):
        self.fields = fields or []
        super().__init__(message)


class SchemaError(EitValidationError):
    pass


# Numeric family


class Indeterminate(EitNumericError):
    pass


class QuadratureNotConverged(EitNumericError):
    def __init__(self, message: str, flagged: list[int] | None = None):
        self.flagged = flagged or []
        super().__init__(message)


class NotResolved(EitNumericError):
    pass


class NoDip(EitNumericError):
    pass


class FitDiverged(EitNumericError):
    pass


class FeatureAbsent(EitNumericError):
    pass


class GridTooCoarse(EitNumericError):
    pass


class DegenerateBaseline(EitNumericError):
    pass


class NoConvergence(EitNumericError):
    def __init__(self, message: str, classes: list[float] | None = None):
        self.classes = classes or []
        super().__init__(message)


# Warnings


class ExpansionUnreliable(UserWarning):
    """First-order sigma_spin correction of the closed-form width is outside its range."""
