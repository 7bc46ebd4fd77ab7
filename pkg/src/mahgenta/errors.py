"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes (see ``mahgenta.cli``); library
callers can catch the base class or the specific failure they care about.
"""


class MahgentaError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(MahgentaError, ValueError):
    """An argument violates an operation's preconditions."""


class CapacityError(MahgentaError):
    """An exact computation would enumerate more events than the cap allows.

    The message names the operation and, where one exists, the sampled
    alternative to route to instead.
    """


class ConvergenceError(MahgentaError):
    """An iterative solve exhausted its budget before meeting tolerance."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class StepSizeError(ConvergenceError):
    """Gradient descent diverged; the learning rate is too large."""


class ParseError(MahgentaError, ValueError):
    """A data or model file could not be parsed."""
