"""Optimal electrode patterns for periodic lattices of surface ion traps."""

from .analysis import PhysicalParams, analyze, kappa, physical_units
from .constraints import (
    ExtraConstraint,
    TrapSpec,
    assemble,
    curvature_from_frequencies,
    cylindrical_gamma,
)
from .fourier import FourierBasis, build_basis
from .lattice import BravaisLattice, PatchGrid
from .optimize import OptimizationError, SolverOptions, solve
from .pipeline import optimize, suppress_spurious

__all__ = [
    "BravaisLattice",
    "ExtraConstraint",
    "FourierBasis",
    "OptimizationError",
    "PatchGrid",
    "PhysicalParams",
    "SolverOptions",
    "TrapSpec",
    "analyze",
    "assemble",
    "build_basis",
    "curvature_from_frequencies",
    "cylindrical_gamma",
    "kappa",
    "optimize",
    "physical_units",
    "solve",
    "suppress_spurious",
]
