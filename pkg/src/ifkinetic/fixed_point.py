"""Firing-rate map Psi and its fixed points.

Psi(x) is the total firing rate of the stationary density computed with the
coupling (g_in, a) that an assumed network rate x would produce.  Network
steady states are the fixed points of Psi.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, grid_for_coupling
from .model import ModelParams, coupling_from_rate
from .steady import (
    DEFAULT_TOL,
    DensityField,
    SteadyConvergenceError,
    assemble,
    firing_profile,
    solve_null_vector,
    steady_state,
)

log = logging.getLogger(__name__)

DEFAULT_LADDER = (0.0,) + tuple(0.1 * 2**k for k in range(9))
X_MAX = 100.0


class BracketError(ValueError):
    pass


@dataclass
class PsiSample:
    x: float
    psi: float
    lower: float
    upper: float
    residual: float
    psi_boundary: float = math.nan  # V_E * int g p(0, g) dg, first-order trace
    error: str | None = None
    field: DensityField | None = field(default=None, repr=False)

    @property
    def excess(self) -> float:
        """Psi(x) - x."""
        return self.psi - self.x

    def within_bounds(self, params: ModelParams, slack: float = 0.0) -> bool:
        value = params.V_F * self.psi
        return (
            value >= self.lower - slack * abs(self.lower)
            and value <= self.upper + slack * abs(self.upper)
        )


def psi_bounds(x: float, params: ModelParams, nu: float | None = None) -> tuple[float, float]:
    """Analytic bracket for V_F * Psi(x).

    Both ends come from bounding J_v between -g_L V_F + (V_E - V_F) g and
    V_E g and using the two-sided estimate on the first g-moment.
    """
    nu = params.nu if nu is None else nu
    c = coupling_from_rate(x, nu, params)
    tail = math.exp(-c.g_in**2 / (2 * c.a))
    lower = -params.g_L * params.V_F + (params.V_E - params.V_F) * (
        c.g_in + math.sqrt(c.a / (2 * math.pi)) * tail
    )
    upper = params.V_E * (c.g_in + math.sqrt(2 * c.a / math.pi) * tail)
    return lower, upper


def evaluate_psi(
    x: float,
    params: ModelParams,
    grid: Grid,
    tol: float = DEFAULT_TOL,
    keep_field: bool = False,
) -> PsiSample:
    """Psi(x) from one stationary solve.

    The mesh is extended in g (same cell widths) when the Maxwellian of the
    induced coupling would be cut off by g_max.
    """
    if x < 0:
        raise ValueError("Psi is defined for x >= 0")
    c = coupling_from_rate(x, params.nu, params)
    g = grid_for_coupling(grid, c)
    if g is not grid:
        log.info("Psi(%g): g_max extended %g -> %g", x, grid.g_max, g.g_max)
    op = assemble(g, c, params)
    p = solve_null_vector(op, tol)
    profile = firing_profile(p, g, params)
    residual = float(np.abs(op.apply(p.values)).sum() / np.abs(p.values).sum())
    # alternate expression through the reset trace, using the first v-cell
    rows = g.reset_rows
    psi_b = float(params.V_E * (g.g_centers[rows] * p.values[0, rows]).sum() * g.h_g)
    lo, up = psi_bounds(x, params)
    return PsiSample(
        x=float(x),
        psi=profile.total,
        lower=lo,
        upper=up,
        residual=residual,
        psi_boundary=psi_b,
        field=p if keep_field else None,
    )


@dataclass
class ScanResult:
    samples: list[PsiSample]
    sign_changes: list[tuple[float, float]]

    def to_csv(self, path) -> None:
        write_scan_csv(self.samples, path)


def scan_psi(
    params: ModelParams,
    xs,
    grid: Grid,
    tol: float = DEFAULT_TOL,
) -> ScanResult:
    """Evaluate Psi on ``xs`` and locate sign changes of Psi(x) - x.

    A failed solve is recorded on its sample (psi = nan) and the scan moves on.
    """
    xs = [float(x) for x in xs]
    if not xs:
        raise ValueError("xs must be nonempty")
    if any(x < 0 for x in xs) or any(b < a for a, b in zip(xs, xs[1:])):
        raise ValueError("xs must be sorted and nonnegative")
    samples = []
    for x in xs:
        try:
            samples.append(evaluate_psi(x, params, grid, tol))
        except SteadyConvergenceError as exc:
            log.warning("Psi(%g) failed: %s", x, exc)
            lo, up = psi_bounds(x, params)
            samples.append(PsiSample(x, math.nan, lo, up, exc.residual, error=str(exc)))
    changes = []
    ok = [s for s in samples if s.error is None]
    for s0, s1 in zip(ok, ok[1:]):
        if np.sign(s0.excess) != np.sign(s1.excess):
            changes.append((s0.x, s1.x))
    return ScanResult(samples, changes)


@dataclass
class FixedPointResult:
    rate: float | None
    excess: float
    iterations: int
    bracket: tuple[float, float] | None
    message: str = ""

    @property
    def found(self) -> bool:
        return self.rate is not None


def find_fixed_point(
    params: ModelParams,
    bracket: tuple[float, float],
    grid: Grid,
    tol: float = 1e-3,
    max_iter: int = 100,
    solver_tol: float = DEFAULT_TOL,
) -> FixedPointResult:
    """Bisection on Psi(x) - x inside a sign-changing bracket.

    Stops once |Psi(x) - x| <= tol at the midpoint.
    """
    lo, hi = map(float, bracket)
    if not 0 <= lo < hi:
        raise BracketError(f"invalid bracket [{lo}, {hi}]")
    f_lo = evaluate_psi(lo, params, grid, solver_tol).excess
    if abs(f_lo) <= tol:
        return FixedPointResult(lo, f_lo, 0, (lo, hi))
    f_hi = evaluate_psi(hi, params, grid, solver_tol).excess
    if abs(f_hi) <= tol:
        return FixedPointResult(hi, f_hi, 0, (lo, hi))
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(
            f"Psi(x) - x has the same sign at both ends of [{lo}, {hi}] ({f_lo:.4g}, {f_hi:.4g})"
        )
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        f_mid = evaluate_psi(mid, params, grid, solver_tol).excess
        if abs(f_mid) <= tol:
            return FixedPointResult(mid, f_mid, it, (lo, hi))
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    raise BracketError(f"bisection exceeded {max_iter} iterations on [{lo}, {hi}]")


def locate_fixed_point(
    params: ModelParams,
    grid: Grid,
    xs=DEFAULT_LADDER,
    tol: float = 1e-3,
    x_max: float = X_MAX,
    solver_tol: float = DEFAULT_TOL,
) -> tuple[FixedPointResult, ScanResult]:
    """Scan for a bracket (doubling past the ladder up to ``x_max``), then bisect.

    Returns a result with ``rate=None`` when no sign change shows up below
    ``x_max``; that is the expected outcome in the non-existence regime.
    """
    scan = scan_psi(params, xs, grid, solver_tol)
    samples = list(scan.samples)
    changes = list(scan.sign_changes)
    x = max(xs[-1], 0.1)
    while not changes and x < x_max:
        x = min(2 * x, x_max)
        s = evaluate_psi(x, params, grid, solver_tol)
        prev = samples[-1]
        samples.append(s)
        if np.sign(prev.excess) != np.sign(s.excess):
            changes.append((prev.x, s.x))
    scan = ScanResult(samples, changes)
    if not changes:
        return (
            FixedPointResult(None, samples[-1].excess, 0, None, "no fixed point detected in range"),
            scan,
        )
    result = find_fixed_point(params, changes[0], grid, tol, solver_tol=solver_tol)
    return result, scan


def self_consistent_state(params: ModelParams, rate: float, grid: Grid, tol: float = DEFAULT_TOL) -> DensityField:
    """Stationary density with the coupling rebuilt from ``rate``."""
    c = coupling_from_rate(rate, params.nu, params)
    return steady_state(grid_for_coupling(grid, c), c, params, tol=tol)


def write_scan_csv(samples: list[PsiSample], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "psi", "lower", "upper", "residual"])
        for s in samples:
            w.writerow([f"{v:.17g}" for v in (s.x, s.psi, s.lower, s.upper, s.residual)])
