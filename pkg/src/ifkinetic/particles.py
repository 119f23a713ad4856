"""Monte Carlo counterpart of the kinetic equation.

Each particle carries (v, g).  Per step of length dt:

    v <- v + J_v(v, g) dt
    g <- |g + J_g(g) dt + sqrt(2 a / sigma_E) dW|

A particle that reaches V_F spikes and restarts at v = 0 with the same g.
Reflection at g = 0 is the pathwise form of the zero-flux wall.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as dg
from .evolution import TimeSeries
from .grid import Grid
from .model import CouplingState, ModelParams, coupling_from_rate, flux_v

log = logging.getLogger(__name__)

PARTITION = 1 << 14
RATE_WINDOW_STEPS = 10


class ParticleError(RuntimeError):
    pass


@dataclass
class ParticleEnsemble:
    v: np.ndarray
    g: np.ndarray
    t: float
    seed: int
    spikes: int = 0

    @property
    def n(self) -> int:
        return int(self.v.size)


@dataclass
class ParticleRun:
    ensemble: ParticleEnsemble
    series: TimeSeries
    rate_window: tuple[float, float]
    spikes_in_window: int
    metadata: dict[str, float] = field(default_factory=dict)

    @property
    def mean_rate(self) -> float:
        """Spikes per particle per unit time over ``rate_window``."""
        t0, t1 = self.rate_window
        return self.spikes_in_window / (self.ensemble.n * (t1 - t0))


class _Streams:
    """One generator per block of PARTITION particles, spawned from the seed."""

    def __init__(self, seed: int, n: int):
        self.bounds = [(s, min(s + PARTITION, n)) for s in range(0, n, PARTITION)]
        children = np.random.SeedSequence(seed).spawn(len(self.bounds) + 1)
        self.gens = [np.random.default_rng(c) for c in children[:-1]]
        self.init = np.random.default_rng(children[-1])
        self.n = n

    def normal(self) -> np.ndarray:
        out = np.empty(self.n)
        for (s, e), gen in zip(self.bounds, self.gens):
            out[s:e] = gen.standard_normal(e - s)
        return out


def initial_ensemble(
    n: int,
    params: ModelParams,
    seed: int,
    coupling: CouplingState | None = None,
    streams: _Streams | None = None,
) -> ParticleEnsemble:
    """v uniform on (0, V_F); g from the Maxwellian of ``coupling``, reflected at 0.

    Without a coupling the zero-rate one is used.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    streams = streams or _Streams(seed, n)
    c = coupling or coupling_from_rate(0.0, params.nu_at(0.0), params)
    rng = streams.init
    v = rng.uniform(0.0, params.V_F, n)
    g = np.abs(c.g_in + math.sqrt(c.a) * rng.standard_normal(n))
    return ParticleEnsemble(v=v, g=g, t=0.0, seed=seed)


def histogram(ens: ParticleEnsemble, grid: Grid) -> np.ndarray:
    """Particle counts per grid cell; particles beyond g_max are not counted."""
    counts, _, _ = np.histogram2d(ens.v, ens.g, bins=[grid.v_edges, grid.g_edges])
    return counts


def empirical_density(ens: ParticleEnsemble, grid: Grid) -> np.ndarray:
    return histogram(ens, grid) / (ens.n * grid.cell_area)


def write_histogram_csv(ens: ParticleEnsemble, grid: Grid, path) -> None:
    counts = histogram(ens, grid)
    vv, gg = np.meshgrid(grid.v_centers, grid.g_centers, indexing="ij")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v", "g", "count"])
        for v, g, c in zip(vv.ravel(), gg.ravel(), counts.ravel()):
            w.writerow([f"{v:.17g}", f"{g:.17g}", int(c)])


def _sample(ens: ParticleEnsemble, grid: Grid, coupling: CouplingState, rate: float, params: ModelParams, K: int, q: float, ell: float):
    p = empirical_density(ens, grid)
    phi = p.sum(axis=0) * grid.h_v
    pos = p > 0
    row = {
        "t": ens.t,
        "mass": float(p.sum() * grid.cell_area),
        "N_total": rate,
        "g_in": coupling.g_in,
        "a": coupling.a,
        "psi": float(ens.v.mean()),
        "f": float(phi[0]),
        "entropy": float((np.abs(np.log(p[pos])) * p[pos]).sum() * grid.cell_area),
        "lq_monitor": dg.lq_monitor(p, grid, q, ell),
        "chi2": dg.chi2_distance(phi, coupling, grid),
    }
    for k in range(1, K + 1):
        row[f"h{k}"] = float(np.mean(ens.g**k))
    return row


def simulate(
    params: ModelParams,
    n: int,
    T: float,
    dt: float | None = None,
    seed: int = 0,
    grid: Grid | None = None,
    frozen: CouplingState | None = None,
    sample_every: float | None = None,
    rate_from: float | None = None,
    K: int = 4,
    q: float = 2.0,
    ell: float = 2.0,
    ensemble: ParticleEnsemble | None = None,
) -> ParticleRun:
    """Euler-Maruyama simulation up to time T.

    With ``frozen`` the coupling is fixed; otherwise it is rebuilt each step
    from the spike rate over the last RATE_WINDOW_STEPS steps.  The mean rate
    is counted over [rate_from, T] (default: the second half).  Samples for
    the time series need a ``grid`` for the histogram-based columns.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not T > 0:
        raise ValueError("T must be > 0")
    dt = T / 1e4 if dt is None else dt
    if not dt > 0:
        raise ValueError("dt must be > 0")
    rate_from = 0.5 * T if rate_from is None else rate_from
    streams = _Streams(seed, n)
    if ensemble is None:
        ens = initial_ensemble(n, params, seed, frozen, streams)
    else:
        ens = ParticleEnsemble(ensemble.v.copy(), ensemble.g.copy(), ensemble.t, seed, ensemble.spikes)
        if ens.n != n:
            raise ValueError("ensemble size does not match n")

    steps = int(round(T / dt))
    every = None if sample_every is None or grid is None else max(1, int(round(sample_every / dt)))
    window: deque[int] = deque(maxlen=RATE_WINDOW_STEPS)
    series = TimeSeries(K=K)
    rate = 0.0
    in_window = 0
    start = ens.t
    VF = params.V_F

    def coupling_now() -> CouplingState:
        if frozen is not None:
            return frozen
        return coupling_from_rate(rate, params.nu_at(ens.t), params)

    if every is not None:
        series.append(_sample(ens, grid, coupling_now(), rate, params, K, q, ell))
    for s in range(1, steps + 1):
        c = coupling_now()
        dv = flux_v(ens.v, ens.g, params) * dt
        noise = streams.normal()
        g_new = np.abs(ens.g + (c.g_in - ens.g) / params.sigma_E * dt + math.sqrt(2 * c.a / params.sigma_E * dt) * noise)
        v_new = ens.v + dv
        fired = v_new >= VF
        k = int(fired.sum())
        v_new[fired] = params.V_R
        np.maximum(v_new, 0.0, out=v_new)
        ens.v, ens.g = v_new, g_new
        ens.t = start + s * dt
        ens.spikes += k
        window.append(k)
        rate = sum(window) / (n * len(window) * dt)
        if ens.t > rate_from + 0.5 * dt:
            in_window += k
        if not (np.isfinite(ens.g).all() and np.isfinite(ens.v).all()):
            raise ParticleError(f"non-finite particle state at t={ens.t:.6g}")
        if every is not None and s % every == 0:
            series.append(_sample(ens, grid, coupling_now(), rate, params, K, q, ell))
    t0 = start + round((rate_from - start) / dt) * dt
    return ParticleRun(
        ensemble=ens,
        series=series,
        rate_window=(t0, ens.t),
        spikes_in_window=in_window,
        metadata={"steps": steps, "dt": dt},
    )
