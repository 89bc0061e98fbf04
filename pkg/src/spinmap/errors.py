"""Exception hierarchy shared by all modules."""


class SpinMapError(Exception):
    """Base class for every error raised by the package."""


class InvalidDimensionError(SpinMapError, ValueError):
    pass


class InvalidStateError(SpinMapError, ValueError):
    pass


class DimensionMismatchError(SpinMapError, ValueError):
    pass


class InvalidDensityError(SpinMapError, ValueError):
    """Spectral density that is negative or otherwise unusable."""


class MemoryBudgetError(SpinMapError, MemoryError):
    """Requested Hilbert space exceeds the configured budget."""

    def __init__(self, required: int, allowed: int):
        self.required = required
        self.allowed = allowed
        super().__init__(
            f"Hilbert space dimension {required} exceeds the allowed budget {allowed}"
        )


class NotPureError(SpinMapError, ValueError):
    pass


class ConvergenceError(SpinMapError, RuntimeError):
    """Krylov step could not reach the requested tolerance."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual estimate {residual:.3e})")


class ReconstructionError(SpinMapError, ValueError):
    pass


class InvalidMapError(SpinMapError, ValueError):
    pass


class BoundViolationError(SpinMapError, AssertionError):
    def __init__(self, worst_time: float, excess: float):
        self.worst_time = worst_time
        self.excess = excess
        super().__init__(
            f"bound violated by {excess:.3e} (worst at t={worst_time:.6g})"
        )


class WindowError(SpinMapError, ValueError):
    pass


class NotApplicableError(SpinMapError, ValueError):
    pass


class OverdampedError(SpinMapError, ValueError):
    """Closed-form weak-coupling expressions need an oscillatory regime."""


class NumericalConsistencyError(SpinMapError, ArithmeticError):
    pass
