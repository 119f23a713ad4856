"""Stationary linear problem: finite-volume operator and its positive kernel.

The scheme is the symmetrized upwind/centered discretization written for
q = exp((g - g_in)^2 / 2a) p.  Substituting q_ij = p_ij / E_j, with E_j the
Maxwellian factor at the cell center, turns it into a conservative scheme on
p whose diffusive edge weights exp(phi_j - phi_{j+1/2}) stay O(1); that is the
form assembled here.  ``DiscreteOperator.q_matrix`` recovers the q-form.

Sign convention: ``op.matrix @ p`` is the net outflow rate of each cell, so
dp/dt = -op.matrix @ p and a stationary density spans the kernel.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, cell_mass
from .model import A_MIN, CouplingState, ModelParams, ParameterError, flux_v, maxwellian_exponent

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
SHIFT_FACTOR = 1e-3


class SteadyConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass
class DensityField:
    """Cell averages p_ij >= 0 on ``grid``."""

    values: np.ndarray
    grid: Grid
    coupling: CouplingState | None = None

    @property
    def mass(self) -> float:
        return cell_mass(self.values, self.grid)

    def normalized(self) -> DensityField:
        return DensityField(self.values / self.mass, self.grid, self.coupling)

    @property
    def q(self) -> np.ndarray:
        """Symmetrized unknown exp((g - g_in)^2 / 2a) p; needs a coupling."""
        if self.coupling is None:
            raise ValueError("q is defined relative to a coupling state")
        return self.values * np.exp(maxwellian_exponent(self.grid.g_centers, self.coupling))[None, :]

    def to_csv(self, path) -> None:
        write_density_csv(self, path)


@dataclass
class FiringProfile:
    """Outflow density N_j through v = V_F and its integral."""

    N: np.ndarray
    total: float


@dataclass
class DiscreteOperator:
    matrix: sp.csr_matrix
    grid: Grid
    coupling: CouplingState
    params: ModelParams

    @property
    def dimension(self) -> int:
        return self.grid.I * self.grid.J

    @property
    def maxwellian_weights(self) -> np.ndarray:
        """E_j = exp(-(g_j - g_in)^2 / 2a) on the g-centers."""
        return np.exp(-maxwellian_exponent(self.grid.g_centers, self.coupling))

    def q_matrix(self) -> sp.csr_matrix:
        """The operator acting on q = p / E (the printed symmetric form)."""
        E = np.tile(self.maxwellian_weights, self.grid.I)
        return (self.matrix @ sp.diags(E)).tocsr()

    def apply(self, p: np.ndarray) -> np.ndarray:
        return (self.matrix @ np.asarray(p).ravel()).reshape(self.grid.shape)

    def mass_rate(self, p: np.ndarray) -> float:
        """Total outflow rate; zero for every input by conservativity."""
        return float(self.apply(p).sum() * self.grid.cell_area)


def v_velocities(grid: Grid, params: ModelParams) -> np.ndarray:
    """J_v on every v-edge, shape (I + 1, J), evaluated at the g-centers."""
    return flux_v(grid.v_edges[:, None], grid.g_centers[None, :], params)


def v_edge_fluxes(p: np.ndarray, grid: Grid, params: ModelParams, u: np.ndarray | None = None) -> np.ndarray:
    """Upwind fluxes through the v-edges, shape (I + 1, J).

    Rows above g_F reinject at v = 0 what leaves at v = V_F; rows at or below
    g_F have zero flux on both walls.
    """
    if u is None:
        u = v_velocities(grid, params)
    F = np.zeros((grid.I + 1, grid.J))
    inner = u[1:-1]
    F[1:-1] = np.where(inner >= 0, inner * p[:-1], inner * p[1:])
    reset = grid.reset_rows
    F[-1, reset] = u[-1, reset] * p[-1, reset]
    F[0, reset] = F[-1, reset]
    return F


def g_edge_weights(grid: Grid, coupling: CouplingState, params: ModelParams):
    """Coefficients of the total g-flux through interior g-edges.

    The flux through edge j + 1/2 (between cells j and j + 1) is
    ``-D * (c_plus[j] * p[j + 1] - c_minus[j] * p[j])`` times h_g with
    D = a / (sigma_E h_g^2).  Returns (D, c_minus, c_plus), each edge array
    of length J - 1.
    """
    if coupling.a < A_MIN:
        raise ParameterError(f"noise intensity a={coupling.a} below a_min={A_MIN}")
    phi_c = maxwellian_exponent(grid.g_centers, coupling)
    phi_e = maxwellian_exponent(grid.g_edges[1:-1], coupling)
    c_minus = np.exp(phi_c[:-1] - phi_e)
    c_plus = np.exp(phi_c[1:] - phi_e)
    D = coupling.a / (params.sigma_E * grid.h_g**2)
    return D, c_minus, c_plus


def g_tridiagonal(grid: Grid, coupling: CouplingState, params: ModelParams):
    """(lower, diag, upper) of the per-column g-operator (outflow convention)."""
    D, cm, cp = g_edge_weights(grid, coupling, params)
    diag = np.zeros(grid.J)
    diag[:-1] += D * cm
    diag[1:] += D * cp
    upper = -D * cp  # row j, column j + 1
    lower = -D * cm  # row j + 1, column j
    return lower, diag, upper


def assemble(grid: Grid, coupling: CouplingState, params: ModelParams) -> DiscreteOperator:
    """Assemble the stationary operator for frozen (g_in, a)."""
    I, J = grid.shape
    idx = np.arange(I * J).reshape(I, J)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(np.broadcast_to(v, r.shape).ravel())

    u = v_velocities(grid, params) / grid.h_v
    # interior v-edges between cells i and i + 1
    inner = u[1:-1]
    left, right = idx[:-1], idx[1:]
    pos = inner >= 0
    add(left[pos], left[pos], inner[pos])
    add(right[pos], left[pos], -inner[pos])
    neg = ~pos
    add(left[neg], right[neg], inner[neg])
    add(right[neg], right[neg], -inner[neg])
    # reset: outflow of cell I reenters cell 1 in the same g-row
    reset = grid.reset_rows
    out = u[-1, reset]
    add(idx[-1, reset], idx[-1, reset], out)
    add(idx[0, reset], idx[-1, reset], -out)

    lower, diag, upper = g_tridiagonal(grid, coupling, params)
    add(idx, idx, np.broadcast_to(diag, (I, J)))
    add(idx[:, :-1], idx[:, 1:], np.broadcast_to(upper, (I, J - 1)))
    add(idx[:, 1:], idx[:, :-1], np.broadcast_to(lower, (I, J - 1)))

    n = I * J
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    mat.sum_duplicates()
    return DiscreteOperator(mat, grid, coupling, params)


def _weighted_residual(op: DiscreteOperator, x: np.ndarray) -> float:
    return float(np.abs(op.matrix @ x).sum() / np.abs(x).sum())


def solve_null_vector(
    op: DiscreteOperator,
    tol: float = DEFAULT_TOL,
    max_iter: int = 500,
    initial: np.ndarray | None = None,
) -> DensityField:
    """Nonnegative normalized kernel vector by shifted inverse iteration.

    (A + s I) is a nonsingular M-matrix for s > 0, so its inverse is
    entrywise nonnegative and iterates started from a positive vector stay
    nonnegative.  The shift is a small fraction of the smallest diagonal
    entry.  Convergence is declared when ||A p||_1 <= tol ||p||_1.
    """
    A = op.matrix
    n = op.dimension
    d = A.diagonal()
    shift = SHIFT_FACTOR * d[d > 0].min()
    lu = spla.splu((A + shift * sp.identity(n, format="csr")).tocsc())
    x = np.ones(n) if initial is None else np.asarray(initial, dtype=float).ravel().copy()
    if x.shape != (n,) or np.any(x < 0) or not x.sum() > 0:
        raise ValueError("initial guess must be a nonnegative, nonzero vector of matching size")
    x /= x.sum()
    res = np.inf
    for it in range(1, max_iter + 1):
        x = lu.solve(x)
        x /= x.sum()
        res = _weighted_residual(op, x)
        if res <= tol:
            break
    else:
        raise SteadyConvergenceError(f"inverse iteration did not converge in {max_iter} iterations", res)
    floor = x.min()
    if floor < 0:
        if -floor > 1e3 * np.finfo(float).eps * x.max():
            raise SteadyConvergenceError("iterate lost nonnegativity", res)
        x = np.clip(x, 0.0, None)
    log.debug("null vector: %d iterations, residual %.2e, shift %.3e", it, res, shift)
    p = x.reshape(op.grid.shape)
    field = DensityField(p / cell_mass(p, op.grid), op.grid, op.coupling)
    return field


def steady_state(
    grid: Grid,
    coupling: CouplingState,
    params: ModelParams,
    tol: float = DEFAULT_TOL,
    max_iter: int = 500,
    initial: np.ndarray | None = None,
) -> DensityField:
    """assemble + solve_null_vector."""
    return solve_null_vector(assemble(grid, coupling, params), tol, max_iter, initial)


def firing_profile(field: DensityField, grid: Grid, params: ModelParams) -> FiringProfile:
    """Discrete outflow density through v = V_F (zero at and below g_F)."""
    p = np.asarray(getattr(field, "values", field))
    u_out = flux_v(params.V_F, grid.g_centers, params)
    N = np.where(grid.reset_rows, u_out * p[-1], 0.0)
    return FiringProfile(N=N, total=float(N.sum() * grid.h_g))


def marginal_g(field: DensityField, grid: Grid) -> np.ndarray:
    """phi_j = sum_i p_ij h_v."""
    return np.asarray(getattr(field, "values", field)).sum(axis=0) * grid.h_v


def marginal_v(field: DensityField, grid: Grid) -> np.ndarray:
    return np.asarray(field.values).sum(axis=1) * grid.h_g


def v_flux_profile(field: DensityField, grid: Grid, params: ModelParams, where: str = "centers") -> np.ndarray:
    """Total voltage flux int J_v p dg at each v-center (or each v-edge).

    At the edges the scheme's own upwind fluxes are used; these are constant
    in v to solver precision for a stationary field.  At the centers J_v is
    evaluated pointwise against the cell averages.
    """
    p = np.asarray(field.values)
    if where == "edges":
        return v_edge_fluxes(p, grid, params).sum(axis=1) * grid.h_g
    if where != "centers":
        raise ValueError("where must be 'centers' or 'edges'")
    u = flux_v(grid.v_centers[:, None], grid.g_centers[None, :], params)
    return (u * p).sum(axis=1) * grid.h_g


def write_density_csv(field: DensityField, path) -> None:
    grid = field.grid
    vv, gg = np.meshgrid(grid.v_centers, grid.g_centers, indexing="ij")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v", "g", "p"])
        for v, g, p in zip(vv.ravel(), gg.ravel(), np.asarray(field.values).ravel()):
            w.writerow([f"{v:.17g}", f"{g:.17g}", f"{p:.17g}"])


def read_density_csv(path, grid: Grid) -> DensityField:
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != grid.I * grid.J:
        raise ValueError(f"{path}: {data.shape[0]} rows, grid expects {grid.I * grid.J}")
    return DensityField(data[:, 2].reshape(grid.shape), grid)
