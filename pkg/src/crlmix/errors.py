"""Exception types shared across the package."""


class CrlmixError(Exception):
    """Base class for all package errors."""


class InvalidArgument(CrlmixError, ValueError):
    pass


class DomainError(CrlmixError, ValueError):
    """Input lies outside the domain of a parameterization map."""


class NumericFailure(CrlmixError, ArithmeticError):
    """A numerical routine (e.g. Cholesky) failed beyond recovery."""


class ConfigError(CrlmixError):
    pass


class DataError(CrlmixError):
    """Malformed input data; carries the row/column location when known."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class SamplerError(NumericFailure):
    """Failure inside a Gibbs sweep, tagged with the iteration index."""

    def __init__(self, message, iteration):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
