"""Isogeometric density-based topology optimization of 2D thermal
meta-structures (cloaks, concentrators, rotators and their combinations)."""
from .errors import ConfigError, GeometryError, ObjectiveError, OptimizerError, ProjectionError, SolverError
from .problem import ProblemSetup, TopOptProblem

__version__ = "0.1.0"

__all__ = [
    "ProblemSetup",
    "TopOptProblem",
    "GeometryError",
    "SolverError",
    "ObjectiveError",
    "OptimizerError",
    "ProjectionError",
    "ConfigError",
]
