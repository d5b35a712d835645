"""Adaptive P1 finite elements with residual and hybrid (flux-recovery) error indicators."""
from ._accel import USE_NUMBA
from .amr import AmrConfig, AmrError, AmrResult, AmrTrace, adaptive_solve, dorfler_mark
from .fem import (CONVECTION_REACTION, DIFFUSION, ProblemData, assemble_galerkin,
                  assemble_supg, energy_norm_error, project_data, solve)
from .hybrid import HybridBreakdown, xi
from .mesh import Mesh, MeshError, bisect, build_initial_mesh, is_conforming, uniform_refine
from .problems import TestProblem, define_problem
from .recovery import RecoveredFlux, recover_flux
from .residual import EstimatorField, eta, residual_parts

__version__ = "0.1.0"

__all__ = [
    "USE_NUMBA", "AmrConfig", "AmrError", "AmrResult", "AmrTrace", "adaptive_solve",
    "dorfler_mark", "CONVECTION_REACTION", "DIFFUSION", "ProblemData", "assemble_galerkin",
    "assemble_supg", "energy_norm_error", "project_data", "solve", "HybridBreakdown", "xi",
    "Mesh", "MeshError", "bisect", "build_initial_mesh", "is_conforming", "uniform_refine",
    "TestProblem", "define_problem", "RecoveredFlux", "recover_flux", "EstimatorField", "eta",
    "residual_parts",
]
