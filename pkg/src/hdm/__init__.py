"""Hessian discretisation method for fourth-order semilinear problems.

Morley, Adini and gradient-recovery discretisations of the stream-function
Navier-Stokes (one component) and von Karman (two components) equations with
clamped boundary conditions, a Newton solver and convergence/property analysis.
"""
from .analysis import (ErrorBundle, PropertyMeasures, compute_cd, compute_errors, compute_properties,
                       compute_sd, compute_wd, compute_wd_hat, compute_wd_tilde, observed_order)
from .assembly import Assembler, BlockVector, SparseSystem
from .discretisation import HessianDiscretisation, build_discretisation, interpolate_dofs
from .mesh import Mesh, build_mesh, refine_red
from .problems import ProblemDefinition, get_exact, get_problem
from .solver import NewtonConfig, NewtonReport, SingularMatrixError, newton_solve, solve_linear
from .study import ConvergenceReport, StudyConfig, emit, read_csv, run_study, to_csv, to_markdown

__all__ = [
    "Assembler", "BlockVector", "ConvergenceReport", "ErrorBundle", "HessianDiscretisation", "Mesh",
    "NewtonConfig", "NewtonReport", "ProblemDefinition", "PropertyMeasures", "SingularMatrixError",
    "SparseSystem", "StudyConfig", "build_discretisation", "build_mesh", "compute_cd", "compute_errors",
    "compute_properties", "compute_sd", "compute_wd", "compute_wd_hat", "compute_wd_tilde", "emit",
    "get_exact", "get_problem", "interpolate_dofs", "newton_solve", "observed_order", "refine_red",
    "read_csv", "run_study", "solve_linear", "to_csv", "to_markdown",
]
__version__ = "0.1.0"
