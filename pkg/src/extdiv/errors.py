"""Exception hierarchy shared by all modules."""


class ExtDivError(Exception):
    """Base class for errors raised by :mod:`extdiv`."""


class DomainError(ExtDivError, ValueError):
    """A point lies outside the domain required by an operator."""


class ParamError(ExtDivError, ValueError):
    """A hyperparameter or configuration value violates its constraints."""


class StepError(ExtDivError, ArithmeticError):
    """A mirror step left the interior of the dual domain (step size too large)."""


class SizeError(ExtDivError, ValueError):
    """Vector length does not match the operator geometry."""


class FormatError(ExtDivError, ValueError):
    """Malformed or unsupported file content."""
