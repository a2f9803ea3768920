"""Least gradient problems on 2-D grids.

Weighted and anisotropic total variation minimization with Dirichlet data,
plus the tools around it: conductivity recovery from current density
magnitude, a calibrated non-uniqueness construction and a barrier
(generalized mean curvature) evaluator.
"""

from leastgrad.grid import BoundaryFace, BoundaryFaces, Grid, divergence, gradient
from leastgrad.metric import Riemannian, WeightedIsotropic, check_conditions
from leastgrad.solver import SolveReport, SolverConfig, solve_least_gradient
from leastgrad.tv import perimeter, relaxed_energy, total_variation

__all__ = [
    "BoundaryFace",
    "BoundaryFaces",
    "Grid",
    "Riemannian",
    "SolveReport",
    "SolverConfig",
    "WeightedIsotropic",
    "check_conditions",
    "divergence",
    "gradient",
    "perimeter",
    "relaxed_energy",
    "solve_least_gradient",
    "total_variation",
]

__version__ = "0.1.0"
