"""Monitored functionals of a density and exponential-rate fits.

All quadratures are midpoint sums over cells, so they are linear in the
field and exact for cell-constant integrands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .grid import Grid
from .model import CouplingState, ModelParams, maxwellian_exponent
from .steady import FiringProfile, firing_profile

P_FLOOR = 1e-300


@dataclass
class Moments:
    psi: float  # int v p
    h: np.ndarray  # h[k] = int g^k p, k = 0..K
    gv: float  # int g v p
    f: float  # int p(v, 0) dv, first g-cell average

    def __getitem__(self, k: int) -> float:
        return float(self.h[k])


@dataclass
class EntropyFunctionals:
    abs_entropy: float
    boundary_flux: float
    fisher: float


@dataclass
class RateFit:
    rate: float
    intercept: float
    rms: float
    window: tuple[float, float]
    stderr: float
    n: int


class FitError(ValueError):
    pass


def _values(field) -> np.ndarray:
    return np.asarray(getattr(field, "values", field))


def moments(field, grid: Grid, K: int = 4) -> Moments:
    if K < 2:
        raise ValueError("K must be >= 2")
    p = _values(field)
    w = grid.cell_area
    v = grid.v_centers
    g = grid.g_centers
    phi = p.sum(axis=0) * grid.h_v
    h = np.array([(g**k * phi).sum() * grid.h_g for k in range(K + 1)])
    return Moments(
        psi=float((v[:, None] * p).sum() * w),
        h=h,
        gv=float((v[:, None] * g[None, :] * p).sum() * w),
        f=float(phi[0]),
    )


def boundary_entropy_flux(profile: FiringProfile, grid: Grid, params: ModelParams) -> float:
    """sum_{g_j > g_F} N_j ln(g V_E / (g (V_E - V_F) - g_L V_F)) h_g."""
    rows = grid.reset_rows
    g = grid.g_centers[rows]
    ratio = g * params.V_E / (g * (params.V_E - params.V_F) - params.g_L * params.V_F)
    return float((profile.N[rows] * np.log(ratio)).sum() * grid.h_g)


def _d_dg(p: np.ndarray, h: float) -> np.ndarray:
    d = np.empty_like(p)
    d[:, 1:-1] = (p[:, 2:] - p[:, :-2]) / (2 * h)
    d[:, 0] = (p[:, 1] - p[:, 0]) / h
    d[:, -1] = (p[:, -1] - p[:, -2]) / h
    return d


def entropy_functionals(field, grid: Grid, coupling: CouplingState, params: ModelParams) -> EntropyFunctionals:
    """Entropy, boundary entropy flux and Fisher-type term a |dp/dg|^2 / p.

    Empty cells contribute nothing to either the entropy or the Fisher term.
    """
    p = _values(field)
    w = grid.cell_area
    pos = p > P_FLOOR
    safe = np.where(pos, p, 1.0)
    abs_entropy = float((np.abs(np.log(safe)) * p)[pos].sum() * w)
    dp = _d_dg(p, grid.h_g)
    fisher = float(coupling.a * np.where(pos, dp**2 / safe, 0.0).sum() * w)
    prof = firing_profile(p, grid, params)
    return EntropyFunctionals(abs_entropy, boundary_entropy_flux(prof, grid, params), fisher)


def truncated_maxwellian(grid: Grid, coupling: CouplingState, exact: bool = False) -> np.ndarray:
    """Maxwellian at the g-centers with unit mass on (0, g_max).

    By default the mass is the midpoint sum on the mesh; ``exact=True`` uses
    the closed-form integral over (0, g_max) instead.
    """
    E = np.exp(-maxwellian_exponent(grid.g_centers, coupling))
    if not exact:
        return E / (E.sum() * grid.h_g)
    s = math.sqrt(2 * coupling.a)
    Z = 0.5 * math.sqrt(math.pi) * s * (
        special.erf((grid.g_max - coupling.g_in) / s) + special.erf(coupling.g_in / s)
    )
    return E / Z


def chi2_distance(marginal: np.ndarray, coupling: CouplingState, grid: Grid) -> float:
    """int M (phi / M - 1)^2 dg against the truncated Maxwellian.

    Written as (phi - M)^2 / M; cells where M underflows contribute nothing
    if phi vanishes there too and make the distance infinite otherwise.
    """
    M = truncated_maxwellian(grid, coupling)
    phi = np.asarray(marginal, dtype=float)
    pos = M > 0
    if np.any(phi[~pos] > 0):
        return math.inf
    return float(((phi[pos] - M[pos]) ** 2 / M[pos]).sum() * grid.h_g)


def normalization_estimate(marginal: np.ndarray, coupling: CouplingState, grid: Grid) -> float:
    """Least-squares Z with marginal ~ exp(-(g - g_in)^2 / 2a) / Z."""
    E = np.exp(-maxwellian_exponent(grid.g_centers, coupling))
    phi = np.asarray(marginal)
    return float((E * E).sum() / (E * phi).sum())


def z_bounds(coupling: CouplingState) -> tuple[float, float]:
    return math.sqrt(coupling.a * math.pi / 2), math.sqrt(2 * coupling.a * math.pi)


def first_moment_bracket(coupling: CouplingState) -> tuple[float, float]:
    """Two-sided bound on int g p for the stationary linear density."""
    tail = math.exp(-coupling.g_in**2 / (2 * coupling.a))
    return (
        coupling.g_in + math.sqrt(coupling.a / (2 * math.pi)) * tail,
        coupling.g_in + math.sqrt(2 * coupling.a / math.pi) * tail,
    )


def lq_monitor(field, grid: Grid, q: float = 2.0, ell: float = 2.0) -> float:
    """int (1 + g)^(ell + q - 1) p^q."""
    if q < 2 or ell < 0:
        raise ValueError("need q >= 2 and ell >= 0")
    p = _values(field)
    weight = (1.0 + grid.g_centers) ** (ell + q - 1)
    return float((weight[None, :] * np.abs(p) ** q).sum() * grid.cell_area)


def fit_rate(t, y, window: tuple[float, float] | None = None) -> RateFit:
    """Least-squares slope of ln y against t.

    The default window drops the first 20% of the sampled time span.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is None:
        t0 = t[0] + 0.2 * (t[-1] - t[0])
        window = (t0, t[-1])
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() < 5:
        raise FitError(f"need >= 5 samples in window {window}, got {int(sel.sum())}")
    if np.any(y[sel] <= 0):
        raise FitError("fitted quantity must be positive in the window")
    ts, ly = t[sel], np.log(y[sel])
    res = stats.linregress(ts, ly)
    resid = ly - (res.intercept + res.slope * ts)
    return RateFit(
        rate=float(res.slope),
        intercept=float(res.intercept),
        rms=float(np.sqrt(np.mean(resid**2))),
        window=(float(ts[0]), float(ts[-1])),
        stderr=float(res.stderr),
        n=int(sel.sum()),
    )


def moment_rates(m: Moments, coupling: CouplingState, total_rate: float, params: ModelParams) -> dict[str, float]:
    """Right-hand sides of the moment equations for psi and h_1..h_K."""
    s = params.sigma_E
    out = {
        "psi": -params.g_L * m.psi - m.gv + params.V_E * m[1] - params.V_F * total_rate,
        "h1": (-m[1] + coupling.g_in + coupling.a * m.f) / s,
    }
    for k in range(2, len(m.h)):
        out[f"h{k}"] = (-k * m[k] + k * coupling.g_in * m[k - 1] + k * (k - 1) * coupling.a * m[k - 2]) / s
    return out


def moment_residuals(rows, params: ModelParams, keys=("h1", "h2", "h3", "psi")) -> dict[str, float]:
    """max |d/dt y - rhs| / max |rhs| along sampled records.

    ``rows`` are time-series records carrying t, N_total, g_in, a, psi, gv,
    f and h0..hK.  Derivatives are second-order finite differences in t.
    """
    t = np.array([r["t"] for r in rows])
    if t.size < 3:
        raise ValueError("need at least 3 samples")
    K = max(int(k[1:]) for k in rows[0] if k.startswith("h") and k[1:].isdigit())
    rhs = {k: [] for k in keys}
    for r in rows:
        m = Moments(psi=r["psi"], h=np.array([r[f"h{k}"] for k in range(K + 1)]), gv=r["gv"], f=r["f"])
        rates = moment_rates(m, CouplingState(r["N_total"], r["g_in"], r["a"]), r["N_total"], params)
        for k in keys:
            rhs[k].append(rates[k])
    out = {}
    for k in keys:
        d = np.gradient(np.array([r[k] for r in rows]), t, edge_order=2)
        ref = np.array(rhs[k])
        out[k] = float(np.abs(d - ref).max() / np.abs(ref).max())
    return out
