"""Exception types shared across the package."""


class VPCasimirError(Exception):
    """Base class for all errors raised by vpcasimir."""


class DomainError(VPCasimirError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericalError(VPCasimirError, RuntimeError):
    """A numerical procedure failed to converge or produced non-finite output.

    Attributes
    ----------
    state : dict
        Whatever diagnostic state the failing routine had at hand
        (bracket ends, sampled curves, offending indices ...).
    """

    def __init__(self, msg, **state):
        super().__init__(msg)
        self.state = state
