"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an operation receives non-finite or out-of-range inputs."""


class DimensionError(ValueError):
    """Raised when array shapes or agent counts do not line up."""


class SolverError(RuntimeError):
    """Base class for Nash solver failures.

    Carries the best iterate found so far (a NashSolution) in ``solution``
    so callers can degrade gracefully.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class MaxIterationsExceeded(SolverError):
    """Solver ran out of Newton iterations / penalty levels before converging."""


class SingularKKTSystem(SolverError):
    """The Newton system stayed singular after Levenberg regularization up to its cap."""


class NonFiniteIterate(SolverError):
    """An iterate left the space of finite numbers."""
