"""Uniform finite-volume mesh on (0, V_F) x (0, g_max)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import CouplingState, ModelParams

TAIL_WIDTHS = 6.0


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Tensor mesh with I cells in v and J cells in g.

    Arrays are indexed ``[i, j]`` with i along v and j along g.  Coordinates
    are formed by multiplication so they are reproducible bit for bit.
    """

    I: int
    J: int
    g_max: float
    V_F: float
    g_F: float

    @property
    def h_v(self) -> float:
        return self.V_F / self.I

    @property
    def h_g(self) -> float:
        return self.g_max / self.J

    @property
    def cell_area(self) -> float:
        return self.h_v * self.h_g

    @property
    def shape(self) -> tuple[int, int]:
        return (self.I, self.J)

    @cached_property
    def v_edges(self) -> np.ndarray:
        return np.arange(self.I + 1) * self.h_v

    @cached_property
    def v_centers(self) -> np.ndarray:
        return (np.arange(self.I) + 0.5) * self.h_v

    @cached_property
    def g_edges(self) -> np.ndarray:
        return np.arange(self.J + 1) * self.h_g

    @cached_property
    def g_centers(self) -> np.ndarray:
        return (np.arange(self.J) + 0.5) * self.h_g

    @cached_property
    def reset_rows(self) -> np.ndarray:
        """Cells whose center lies strictly above g_F (ties stay Dirichlet)."""
        return self.g_centers > self.g_F

    @property
    def j_F(self) -> int:
        """Index of the g-cell containing g_F."""
        return min(int(math.floor(self.g_F / self.h_g)), self.J - 1)

    def covers(self, coupling: CouplingState, widths: float = TAIL_WIDTHS) -> bool:
        return self.g_max >= coupling.g_in + widths * math.sqrt(coupling.a)

    def extended_to(self, g_needed: float) -> Grid:
        """Same cell widths, with enough g-cells to reach ``g_needed``."""
        if g_needed <= self.g_max:
            return self
        J = int(math.ceil(g_needed / self.h_g))
        return Grid(self.I, J, J * self.h_g, self.V_F, self.g_F)


def build_grid(I: int, J: int, g_max: float, params: ModelParams) -> Grid:
    """Mesh for ``params``; rejects a domain that stops below g_F."""
    if I < 4 or J < 4:
        raise GridError(f"need I, J >= 4, got I={I}, J={J}")
    if not g_max > params.g_F:
        raise GridError(f"g_max={g_max} must exceed g_F={params.g_F}")
    return Grid(int(I), int(J), float(g_max), params.V_F, params.g_F)


def grid_for_coupling(grid: Grid, coupling: CouplingState, widths: float = 8.0) -> Grid:
    """Extend ``grid`` in g when the Maxwellian tail is not resolved."""
    if grid.covers(coupling):
        return grid
    return grid.extended_to(coupling.g_in + widths * math.sqrt(coupling.a))


def cell_mass(field, grid: Grid) -> float:
    """Sum of p_ij h_v h_g for a DensityField or a bare (I, J) array."""
    values = np.asarray(getattr(field, "values", field))
    if values.shape != grid.shape:
        raise GridError(f"field shape {values.shape} does not match grid {grid.shape}")
    return float(values.sum() * grid.cell_area)
