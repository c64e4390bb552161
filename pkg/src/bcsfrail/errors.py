"""Exception hierarchy shared by all modules."""


class FrailtyError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(FrailtyError, ValueError):
    """A parameter violates its constraint."""


class DomainOverflowError(FrailtyError, ArithmeticError):
    """A hazard computation left the representable range."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class QuadratureError(FrailtyError, ArithmeticError):
    """Adaptive integration hit its subdivision limit."""

    def __init__(self, message, value=float("nan"), error_estimate=float("inf"), axis=None):
        super().__init__(message)
        self.value = value
        self.error_estimate = error_estimate
        self.axis = axis


class BracketError(FrailtyError, ValueError):
    """Root bracket endpoints have the same sign."""


class IntegrityError(FrailtyError, ArithmeticError):
    """Probabilities computed from the model are inconsistent."""


class UnstablePointError(FrailtyError, ArithmeticError):
    """A cross-ratio denominator vanished numerically."""


class CalibrationError(FrailtyError, ValueError):
    """The target censoring probability is unattainable."""


class StudyError(FrailtyError, RuntimeError):
    """A simulation study produced no usable replicate."""


class InputError(FrailtyError, ValueError):
    """Malformed dataset or configuration file."""

    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip() if where else message)
        self.line = line
        self.path = path
