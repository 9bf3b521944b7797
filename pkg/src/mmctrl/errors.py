"""Exception types shared across the library."""


class MmctrlError(Exception):
    """Base class for all library-specific errors."""


class ConfigError(MmctrlError, ValueError):
    """Invalid configuration value or unresolvable reference."""


class VehicleAtRest(MmctrlError, ValueError):
    """Slip is undefined at V_x <= 0; caller must treat slip as 1."""


class SingularLinearization(MmctrlError, ValueError):
    """Linearization requested at a velocity where the model divides by V_x."""


class NumericError(MmctrlError, RuntimeError):
    """Numeric analysis failure (overflow, non-finite intermediate)."""


class ConvergenceError(NumericError):
    """Iterative solver failed to converge.

    Carries the best iterate and its residual for diagnosis.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class SimulationBlowup(NumericError):
    """Non-finite state encountered during integration; carries the step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InfeasibleSchedule(MmctrlError, ValueError):
    """Task set cannot be placed in a cyclic table (overloaded window)."""
