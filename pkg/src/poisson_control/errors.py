"""Exception hierarchy shared by the solver modules."""


class ControlError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ControlError, ValueError):
    """A state lies on or outside the boundary of the state interval."""


class UnsupportedOrderError(ControlError, ValueError):
    pass


class TailDivergenceError(ControlError):
    """The truncated improper integral did not settle (f is likely not in L^1_s)."""


class QuadratureError(ControlError):
    def __init__(self, message: str, interval: tuple[float, float] | None = None):
        super().__init__(message)
        self.interval = interval


class BracketingError(ControlError):
    """A root could not be bracketed; usually an assumption violation."""

    def __init__(self, message: str, name: str = ""):
        super().__init__(message)
        self.name = name


class InversionError(BracketingError):
    pass


class SolverError(ControlError):
    """The threshold pair could not be found (nonexistence or nonconvergence)."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class PastingError(ControlError):
    pass


class ConfigError(ControlError, ValueError):
    pass


class SimulationError(ControlError):
    pass
