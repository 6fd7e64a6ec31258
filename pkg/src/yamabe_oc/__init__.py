"""Discrete Yamabe optimal control: obstacle map, quotients, minimizers and law checks."""
from .conformal import deform, discrete_scalar_curvature
from .discretization import (
    ConformalStructure,
    InadmissibleError,
    StructureError,
    build_from_matrices,
    build_symmetric_sphere,
    check_admissible,
    energy,
    lq_norm,
)
from .functionals import eval_I, eval_J, quotient_report
from .lawcheck import LawReport, run_laws
from .minimize import (
    MinimizeOptions,
    continue_to_critical,
    cross_verify_minimizers,
    minimize_I,
    minimize_J,
)
from .obstacle import ObstacleSolverError, SolverOptions, fixed_point_residual, solve_obstacle
from .sampling import sample_positive_field
from .sphere import bubble, verify_sphere_theorem

__version__ = "0.1.0"

__all__ = [
    "ConformalStructure",
    "InadmissibleError",
    "LawReport",
    "MinimizeOptions",
    "ObstacleSolverError",
    "SolverOptions",
    "StructureError",
    "bubble",
    "build_from_matrices",
    "build_symmetric_sphere",
    "check_admissible",
    "continue_to_critical",
    "cross_verify_minimizers",
    "deform",
    "discrete_scalar_curvature",
    "energy",
    "eval_I",
    "eval_J",
    "fixed_point_residual",
    "lq_norm",
    "minimize_I",
    "minimize_J",
    "quotient_report",
    "run_laws",
    "sample_positive_field",
    "solve_obstacle",
    "verify_sphere_theorem",
]
