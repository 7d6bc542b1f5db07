"""Finite element solver for 3D magnetostatic and force-free equilibria.

The field is split into an irrotational part and an edge-element
correction; pressure and the parallel current coefficient are transported
along the field with streamline-diffusion stabilised P1 elements, and the
three steps are iterated to a fixed point.
"""
from .cases import AnalyticCase, make_bennett_case, make_fff_case, relative_l2_error
from .equilibrium import EquilibriumState, SolverConfig, run_equilibrium
from .errors import (DataError, DegenerateFieldWarning, InvalidArgument, LinearSolverError,
                     NumericalBreakdown, OutOfDomain, SolverDivergence)
from .mesh import TetMesh, build_box_mesh, classify_inflow, mesh_size

__version__ = "0.1.0"

__all__ = [
    "AnalyticCase", "make_bennett_case", "make_fff_case", "relative_l2_error",
    "EquilibriumState", "SolverConfig", "run_equilibrium", "DataError",
    "DegenerateFieldWarning", "InvalidArgument", "LinearSolverError", "NumericalBreakdown",
    "OutOfDomain", "SolverDivergence", "TetMesh", "build_box_mesh", "classify_inflow", "mesh_size",
]
