"""Exception hierarchy shared by every layer of the package."""


class PQHarmonicError(Exception):
    """Base class for all package errors."""


class InvalidOrderError(PQHarmonicError, ValueError):
    """Jet order too small for the requested operation."""


class JetMismatchError(PQHarmonicError, ValueError):
    """Two jets with different dimension (or order, in strict mode) were combined."""


class DegeneratePointError(PQHarmonicError, ArithmeticError):
    """A quantity under a division or a real power collapsed below the threshold."""

    def __init__(self, message, value=None, quantity=None):
        super().__init__(message)
        self.value = value
        self.quantity = quantity


class DomainError(PQHarmonicError, ValueError):
    """A point lies outside a chart's domain guard."""


class MetricError(PQHarmonicError, ArithmeticError):
    """Metric is singular or not positive definite."""


class ParameterError(PQHarmonicError, ValueError):
    """An exponent or example parameter is outside its admissible range."""


class ProblemParseError(PQHarmonicError, ValueError):
    """A problem file or expression could not be parsed."""
