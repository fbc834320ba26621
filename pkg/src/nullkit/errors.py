"""Exception types shared across the package."""


class NullkitError(Exception):
    """Base class for all package errors."""


class ChartDomainError(NullkitError):
    """A point (or a curve) left the declared validity box of a chart.

    ``exit_parameter`` carries the curve parameter at which the chart was
    left, when the error comes from integrating a curve.
    """

    def __init__(self, message, exit_parameter=None):
        super().__init__(message)
        self.exit_parameter = exit_parameter


class QuadratureRangeError(NullkitError):
    """A requested antiderivative value is outside the attainable range."""

    def __init__(self, message, value=None, valid_range=None):
        super().__init__(message)
        self.value = value
        self.valid_range = valid_range


class ShootingError(NullkitError):
    """Boundary-value geodesic solve failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegeneratePlaneError(NullkitError):
    """The two vectors supposed to span a plane are (nearly) dependent."""


class DomainEvalError(NullkitError):
    """A scalar expression hit a domain error (log of negative, etc.)."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class ParseError(NullkitError):
    """Syntax error in an expression; carries the byte offset."""

    def __init__(self, message, position, expected=()):
        super().__init__(f"{message} at offset {position}")
        self.position = position
        self.expected = tuple(expected)


class UmbilicityError(NullkitError):
    """An operation that requires umbilicity was run on a surface failing it."""


class HypothesisError(NullkitError):
    """A stated hypothesis of a classification routine is not met."""


class ConfigError(NullkitError):
    """Invalid job configuration."""
