"""Solvers for the voltage-conductance kinetic equation of integrate-and-fire networks."""

from .grid import Grid, build_grid, cell_mass
from .model import CouplingState, ModelParams, ParameterError, classify_regime, coupling_from_rate

__all__ = [
    "CouplingState",
    "Grid",
    "ModelParams",
    "ParameterError",
    "build_grid",
    "cell_mass",
    "classify_regime",
    "coupling_from_rate",
]

__version__ = "0.1.0"
