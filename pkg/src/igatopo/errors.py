"""Exception types raised across the package."""


class GeometryError(ValueError):
    """Invalid or degenerate patch geometry (e.g. a folded Jacobian)."""


class SolverError(RuntimeError):
    """Linear solve failed or the system is not well posed."""


class ObjectiveError(ArithmeticError):
    """A functional cannot be evaluated for the given field."""


class OptimizerError(RuntimeError):
    """The optimizer could not proceed.

    ``iterate`` holds the design variables at the time of failure.
    """

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class ProjectionError(RuntimeError):
    """Point inversion onto a patch did not converge."""


class ConfigError(ValueError):
    """Run configuration failed validation."""
