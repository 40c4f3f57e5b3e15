"""Lowest-order discrete element discretization of elasto-plasticity on
polyhedral meshes: cell and boundary-vertex displacement dofs, barycentric
facet reconstruction, facet-jump penalty, radial-return plasticity, a
quasi-static Newton solver and an explicit two-step dynamic integrator."""

from .analytic import Manufactured2D, ThickCylinder, TorsionBeam, TractionBar, get_case
from .assembly import BoundaryCondition, DofMap, assemble_stiffness, build_operators, lump_mass
from .dynamics import QuadratureRule, critical_dt, estimate_lambda_max, run_dynamics, stability_limit
from .mesh import MeshError, PolyMesh, load_mesh
from .plasticity import CellState, Material, plas_exp, plas_imp
from .problem import Problem, build_problem
from .quasistatic import LoadProgram, SolveControls, quasistatic_solve, static_solve
from .reconstruct import build_reconstruction

__version__ = "0.1.0"

__all__ = [
    "BoundaryCondition",
    "CellState",
    "DofMap",
    "LoadProgram",
    "Manufactured2D",
    "Material",
    "MeshError",
    "PolyMesh",
    "Problem",
    "QuadratureRule",
    "SolveControls",
    "ThickCylinder",
    "TorsionBeam",
    "TractionBar",
    "assemble_stiffness",
    "build_operators",
    "build_problem",
    "build_reconstruction",
    "critical_dt",
    "estimate_lambda_max",
    "get_case",
    "load_mesh",
    "lump_mass",
    "plas_exp",
    "plas_imp",
    "quasistatic_solve",
    "run_dynamics",
    "stability_limit",
    "static_solve",
]
