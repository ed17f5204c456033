"""Exception types raised across the package."""


class EdfFluidError(Exception):
    """Base class for all package errors."""


class ConfigError(EdfFluidError):
    """Malformed or incomplete configuration."""


class QuadratureNonConvergence(EdfFluidError):
    pass


class AssumptionViolation(EdfFluidError):
    """A modelling assumption required by the fluid engine does not hold.

    ``assumption`` names the violated condition so callers can report it.
    """

    def __init__(self, assumption: str, detail: str):
        self.assumption = assumption
        super().__init__(f"AssumptionViolation[{assumption}]: {detail}")


class GridMismatch(EdfFluidError):
    pass


class BracketNotFound(EdfFluidError):
    pass


class RootNotFound(EdfFluidError):
    pass


class RegimeError(EdfFluidError):
    pass


class EventOverflow(EdfFluidError):
    """The simulator processed more events than its configured cap."""
