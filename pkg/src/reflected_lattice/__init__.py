"""Lattice approximations of reflected stochastic heat equations on [0, 1]."""

__version__ = "0.1.0"

from .lattice import (DimensionError, DiscreteLaplacian, DomainError, GridSpec, SpectralBasis,
                      continuum_kernel, discrete_kernel, lift, semigroup_apply)
from .noise import LatticeDriver, SheetIncrements, coarsen, sample
from .skorohod import BoundaryPath, PreconditionError, SkorohodSolution, SolverConfig, solve
from .obstacle import ObstacleInstance, convergence_study, solve_obstacle
from .spde import Coefficients, SimulationConfig, coupled_gap_study, moment_estimate, simulate

__all__ = [
    "BoundaryPath", "Coefficients", "DimensionError", "DiscreteLaplacian", "DomainError",
    "GridSpec", "LatticeDriver", "ObstacleInstance", "PreconditionError", "SheetIncrements",
    "SimulationConfig", "SkorohodSolution", "SolverConfig", "SpectralBasis", "coarsen",
    "continuum_kernel", "convergence_study", "coupled_gap_study", "discrete_kernel", "lift",
    "moment_estimate", "sample", "semigroup_apply", "simulate", "solve", "solve_obstacle",
]
