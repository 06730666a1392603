"""Exception types raised across the package."""


class KahlerflowError(Exception):
    """Base class for all package errors."""


class PositivityLost(KahlerflowError):
    """A metric stopped being positive definite where positivity is required.

    Carries the offending minimum eigenvalue and the flat grid index where it
    was attained.
    """

    def __init__(self, min_eigenvalue: float, index: tuple):
        self.min_eigenvalue = float(min_eigenvalue)
        self.index = tuple(index)
        super().__init__(
            f"metric not positive definite: min eigenvalue "
            f"{self.min_eigenvalue:.6e} at grid index {self.index}"
        )


class StepFailure(KahlerflowError):
    """Adaptive time step underflowed; genuine stiffness blow-up or loss of
    positivity.  ``trajectory`` holds whatever was integrated up to the
    failure, when available."""

    def __init__(self, message: str, trajectory=None):
        self.trajectory = trajectory
        super().__init__(message)


class RescaleOnUnnormalized(KahlerflowError):
    """Attempted to rescale a trajectory that is already on the unnormalized
    clock."""


class SandwichViolation(KahlerflowError):
    """A volume-ratio inequality failed at some sampled time/point."""

    def __init__(self, t: float, index, ratio: float, side: str):
        self.t = t
        self.index = index
        self.ratio = ratio
        self.side = side
        super().__init__(
            f"volume sandwich violated ({side}) at t={t:.6g}, "
            f"index {index}, ratio {ratio:.6e}"
        )


class NewtonDivergence(KahlerflowError):
    """Newton iteration failed to converge within the iteration budget."""


class LinearSolveFailure(KahlerflowError):
    """Inner Krylov solve did not reach its requested residual."""


class BoundViolation(KahlerflowError):
    """An a priori bound check failed; ``margin`` is the violated amount."""

    def __init__(self, message: str, margin: float):
        self.margin = margin
        super().__init__(f"{message} (margin {margin:.3e})")


class InequalityViolation(KahlerflowError):
    """A differential inequality check failed at a sample."""


class OptimalityFailure(KahlerflowError):
    """The rescaled curvature floor degenerated to zero in the sampled range."""


class ToleranceExceeded(KahlerflowError):
    """A validation comparison exceeded its stated tolerance."""


class ConfigError(KahlerflowError):
    """Scenario configuration failed schema validation."""


class NonpositiveValues(KahlerflowError):
    """Log-log fitting requested on data that is not strictly positive."""
