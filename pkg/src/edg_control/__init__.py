"""
Embedded discontinuous Galerkin (EDG) solver for distributed optimal control
of convection-diffusion equations on the unit square.

Both solution paths are provided: the coupled optimality system
(optimize-then-discretize) and a condensed reduced quadratic program
(discretize-then-optimize).
"""

from .assembly import assemble_blocks
from .basis import build_spaces, interpolate_boundary
from .condensation import condense, reconstruct
from .errors import EDGError
from .harness import ConvergenceReport, StudyConfig, l2_error, run_convergence
from .mesh import Mesh, build_structured
from .problems import PROBLEMS, Params, derive_data, get_problem
from .solve import SolutionFields, check_commutativity, solve_do, solve_od

__version__ = "0.1.0"

__all__ = [
    "ConvergenceReport", "EDGError", "Mesh", "PROBLEMS", "Params", "SolutionFields",
    "StudyConfig", "assemble_blocks", "build_spaces", "build_structured",
    "check_commutativity", "condense", "derive_data", "get_problem",
    "interpolate_boundary", "l2_error", "reconstruct", "run_convergence", "solve_do",
    "solve_od",
]
