"""Hybridizable discontinuous Galerkin solver for linearized incompressible MHD in 2D."""

from .mesh import Mesh, MeshError, build_hartmann_mesh, build_lshaped_mesh
from .space import Space
from .local import Coefficients, QuadratureDegrees, QuadratureWarning, LocalSolverError
from .system import DiscreteSolution, SolverError, solve_condensed, solve_monolithic
from .problems import ManufacturedProblem, get_problem

__all__ = [
    "Mesh", "MeshError", "build_hartmann_mesh", "build_lshaped_mesh", "Space",
    "Coefficients", "QuadratureDegrees", "QuadratureWarning", "LocalSolverError",
    "DiscreteSolution", "SolverError", "solve_condensed", "solve_monolithic",
    "ManufacturedProblem", "get_problem",
]
__version__ = "0.1.0"
