"""Acceptance checks, one function per criterion.

Every check returns a :class:`Check` carrying the measured values and the
thresholds it was held to.  Expensive shared computations (the default
linear steady solutions and the linear decay run) are cached on a
:class:`Context` so the full suite solves each of them once.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats

from . import diagnostics as dg
from .evolution import EvolutionConfig, RunResult, default_initial, run
from .fixed_point import DEFAULT_LADDER, find_fixed_point, scan_psi
from .grid import build_grid
from .model import ModelParams, classify_regime, coupling_from_rate
from .particles import simulate
from .steady import (
    DEFAULT_TOL,
    DensityField,
    assemble,
    firing_profile,
    marginal_g,
    solve_null_vector,
    steady_state,
    v_flux_profile,
)

log = logging.getLogger(__name__)

G_MAX = 8.0

# pinned tolerances
MARGINAL_TOL = 0.05
MARGINAL_RATIO = 0.6
STEADY_RUNTIME = 60.0
FLUX_TOL = 0.05
FLUX_RATIO = 0.55
BRACKET_SLACK = 0.05
UNIQUENESS_FACTOR = 10.0
FIXED_POINT_TOL = 1e-3
SCAN_RUNTIME = 600.0
PSI_SLACK = 0.05
MASS_TOL = 1e-10
MASS_STEPS = 10_000
DRIFT_TOL = 0.01
FIT_RESIDUAL = 0.10
MOMENT_TOL = 0.10
LATE_GROWTH = 1.1
CUMULATIVE_EXPONENT = 1.2
GROWTH_FRACTION = 0.85
KS_TOL = 0.01
RATE_TOL = 0.05
ORACLE_RUNTIME = 300.0

# configurations used by the evolution checks
WEAK_S_E = 0.1
STRONG_S_E = 0.5
STRONG_H1 = 4.0
STRONG_G_MAX = 80.0
DECAY_G_MEAN = 3.0
DECAY_G_VAR = 0.5


@dataclass
class Check:
    key: str
    title: str
    passed: bool
    values: dict[str, float] = field(default_factory=dict)
    note: str = ""

    def line(self) -> str:
        vals = " ".join(f"{k}={_fmt(v)}" for k, v in self.values.items())
        status = "PASS" if self.passed else "FAIL"
        return f"{self.key}: {status} {vals}".rstrip() + (f" # {self.note}" if self.note else "")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6g}"


@dataclass
class Context:
    """Shared inputs and cached solutions."""

    params: ModelParams = field(default_factory=ModelParams)
    seed: int = 12345
    particles: int = 100_000

    def linear(self) -> ModelParams:
        return self.params.with_(S_E=0.0)

    def coupling(self):
        return coupling_from_rate(0.0, self.params.nu, self.linear())

    def steady(self, I: int, J: int) -> tuple[DensityField, float]:
        key = (I, J)
        cache = self.__dict__.setdefault("_steady", {})
        if key not in cache:
            t0 = time.perf_counter()
            grid = build_grid(I, J, G_MAX, self.linear())
            field_ = steady_state(grid, self.coupling(), self.linear())
            cache[key] = (field_, time.perf_counter() - t0)
        return cache[key]

    @cached_property
    def decay_run(self) -> RunResult:
        """S_E = 0 from a Gaussian displaced in g; shared by three checks."""
        P = self.linear()
        grid = build_grid(64, 128, G_MAX, P)
        p0 = default_initial(grid, P, g_mean=DECAY_G_MEAN, g_var=DECAY_G_VAR)
        return run(p0, 6.0, P, EvolutionConfig(sample_every=0.05))

    @cached_property
    def scans(self):
        t0 = time.perf_counter()
        grid = build_grid(128, 256, G_MAX, self.params)
        weak = self.params.with_(S_E=0.2)
        strong = self.params.with_(S_E=0.4)
        scan_w = scan_psi(weak, DEFAULT_LADDER, grid)
        fp = None
        if scan_w.sign_changes:
            fp = find_fixed_point(weak, scan_w.sign_changes[0], grid, FIXED_POINT_TOL)
        scan_s = scan_psi(strong, DEFAULT_LADDER, grid)
        return scan_w, fp, scan_s, time.perf_counter() - t0


def _marginal_error(field_: DensityField, coupling) -> float:
    grid = field_.grid
    M = dg.truncated_maxwellian(grid, coupling, exact=True)
    return float(np.abs(marginal_g(field_, grid) - M).sum() / np.abs(M).sum())


def check_marginal(ctx: Context) -> Check:
    c = ctx.coupling()
    coarse, t_c = ctx.steady(128, 256)
    fine, t_f = ctx.steady(256, 512)
    e_c, e_f = _marginal_error(coarse, c), _marginal_error(fine, c)
    ratio = e_f / e_c
    ok = e_c <= MARGINAL_TOL and ratio <= MARGINAL_RATIO and t_c <= STEADY_RUNTIME
    return Check("c01_maxwellian_marginal", "g-marginal vs Maxwellian", ok,
                 {"l1_128x256": e_c, "l1_256x512": e_f, "ratio": ratio, "runtime_s": t_c})


def _flux_deviation(field_: DensityField, P: ModelParams) -> tuple[float, float, float]:
    grid = field_.grid
    N = firing_profile(field_, grid, P).total
    F = v_flux_profile(field_, grid, P)
    return float(np.abs(F - N).max() / N), float(np.abs(F - F.mean()).max() / N), N


def check_flux(ctx: Context) -> Check:
    P = ctx.linear()
    d_c, m_c, N = _flux_deviation(ctx.steady(128, 256)[0], P)
    d_f, m_f, _ = _flux_deviation(ctx.steady(256, 512)[0], P)
    ratio = d_f / d_c
    ok = d_c <= FLUX_TOL and ratio <= FLUX_RATIO
    return Check("c02_flux_constancy", "voltage flux constant in v", ok,
                 {"dev_128x256": d_c, "dev_256x512": d_f, "ratio": ratio,
                  "dev_mean_128x256": m_c, "dev_mean_256x512": m_f, "N": N},
                 note="deviation measured from N")


def check_bounds(ctx: Context) -> Check:
    c = ctx.coupling()
    field_, _ = ctx.steady(128, 256)
    grid = field_.grid
    Z = dg.normalization_estimate(marginal_g(field_, grid), c, grid)
    z_lo, z_hi = dg.z_bounds(c)
    h1 = dg.moments(field_, grid).h[1]
    lo, hi = dg.first_moment_bracket(c)
    slack = BRACKET_SLACK * (hi - lo)
    ok = z_lo <= Z <= z_hi and lo - slack <= h1 <= hi + slack
    return Check("c03_z_and_moment_bracket", "Z bounds and first-moment bracket", ok,
                 {"Z": Z, "Z_lo": z_lo, "Z_hi": z_hi, "h1": h1, "h1_lo": lo, "h1_hi": hi})


def check_uniqueness(ctx: Context) -> Check:
    P = ctx.linear()
    grid = build_grid(64, 128, G_MAX, P)
    op = assemble(grid, ctx.coupling(), P)
    rng = np.random.default_rng(ctx.seed)
    a = solve_null_vector(op, DEFAULT_TOL, initial=rng.uniform(0.1, 1.0, op.dimension))
    b = solve_null_vector(op, DEFAULT_TOL, initial=rng.uniform(0.1, 1.0, op.dimension))
    dist = float(np.abs(a.values - b.values).sum() * grid.cell_area)
    return Check("c04_uniqueness", "kernel independent of the start", dist <= UNIQUENESS_FACTOR * DEFAULT_TOL,
                 {"l1_distance": dist, "limit": UNIQUENESS_FACTOR * DEFAULT_TOL})


def check_regimes(ctx: Context) -> Check:
    scan_w, fp, scan_s, elapsed = ctx.scans
    strong = ctx.params.with_(S_E=0.4)
    rep = classify_regime(strong)
    noise = (strong.V_E - strong.V_F) * strong.f_E * strong.nu > strong.V_F**2
    all_pos = all(s.error is None and s.excess > 0 for s in scan_s.samples)
    ok = (
        bool(scan_w.sign_changes)
        and fp is not None
        and abs(fp.excess) <= FIXED_POINT_TOL
        and noise
        and rep.strong_no_steady
        and all_pos
        and scan_w.samples[0].psi > 0
        and scan_s.samples[0].psi > 0
        and elapsed <= SCAN_RUNTIME
    )
    vals = {
        "sign_changes_weak": len(scan_w.sign_changes),
        "N_star": fp.rate if fp else math.nan,
        "excess": fp.excess if fp else math.nan,
        "min_excess_strong": min(s.excess for s in scan_s.samples),
        "psi0_weak": scan_w.samples[0].psi,
        "psi0_strong": scan_s.samples[0].psi,
        "runtime_s": elapsed,
    }
    return Check("c05_fixed_point_regimes", "existence and non-existence of fixed points", ok, vals)


def check_psi_bracket(ctx: Context) -> Check:
    scan_w, _, scan_s, _ = ctx.scans
    weak = ctx.params.with_(S_E=0.2)
    strong = ctx.params.with_(S_E=0.4)
    samples = [(s, weak) for s in scan_w.samples] + [(s, strong) for s in scan_s.samples]
    bad = [s.x for s, P in samples if s.error is not None or not s.within_bounds(P, PSI_SLACK)]
    worst = max(abs(s.psi_boundary - s.psi) / s.psi for s, _ in samples if s.error is None)
    return Check("c06_psi_bracket", "Psi inside its analytic bracket", not bad,
                 {"samples": len(samples), "violations": len(bad), "max_trace_mismatch": worst})


def check_conservation(ctx: Context) -> Check:
    P = ctx.linear()
    grid = build_grid(64, 128, G_MAX, P)
    p_star = steady_state(grid, ctx.coupling(), P)
    res = run(p_star, 5.0, P, EvolutionConfig(sample_every=0.5))
    drift = float(np.abs(res.final.field.values - p_star.values).sum() * grid.cell_area)
    mass_err = float(np.abs(res.series["mass"] - 1.0).max())
    ok = res.steps >= MASS_STEPS and mass_err <= MASS_TOL and drift <= DRIFT_TOL
    return Check("c07_conservation_stationarity", "mass and stationarity", ok,
                 {"steps": res.steps, "mass_error": mass_err, "l1_drift": drift, "dt": res.metadata["dt_first"]})


def check_linear_decay(ctx: Context) -> Check:
    s = ctx.decay_run.series
    fit = dg.fit_rate(s["t"], s["chi2"])
    eta = -fit.rate
    rel = fit.rms / abs(fit.rate)
    ok = eta > 0 and rel <= FIT_RESIDUAL
    return Check("c08_linear_decay", "chi2 decays exponentially", ok,
                 {"eta": eta, "rms_over_slope": rel, "t0": fit.window[0], "t1": fit.window[1]})


def _moment_errors(P: ModelParams, I: int, J: int, every: float) -> dict[str, float]:
    grid = build_grid(I, J, G_MAX, P)
    p0 = default_initial(grid, P, g_mean=DECAY_G_MEAN, g_var=DECAY_G_VAR)
    res = run(p0, 2.0, P, EvolutionConfig(sample_every=every))
    return dg.moment_residuals(res.series.rows, P)


def check_moments(ctx: Context) -> Check:
    P = ctx.params.with_(S_E=0.2)
    coarse = _moment_errors(P, 32, 64, 0.004)
    fine = _moment_errors(P, 64, 128, 0.002)
    ok = all(fine[k] <= MOMENT_TOL and coarse[k] <= MOMENT_TOL and fine[k] < coarse[k] for k in coarse)
    vals = {f"{k}_coarse": v for k, v in coarse.items()} | {f"{k}_fine": v for k, v in fine.items()}
    return Check("c09_moment_odes", "moment equations along a run", ok, vals)


def check_weak_bounded(ctx: Context) -> Check:
    P = ctx.params.with_(S_E=WEAK_S_E)
    rep = classify_regime(P)
    grid = build_grid(32, 96, 12.0, P)
    res = run(default_initial(grid, P), 10.0, P, EvolutionConfig(sample_every=0.05))
    rows = res.series.rows
    t = res.series["t"]
    h1 = res.series["h1"]
    ratio = float(h1.max() / h1[t <= 5.0 + 1e-9].max())
    cum = np.array([r["cum_N"] for r in rows])
    sel = t >= 2.0
    exponent = float(stats.linregress(np.log(t[sel]), np.log(cum[sel])).slope)
    ok = rep.omega_E < 0 and ratio <= LATE_GROWTH and exponent < CUMULATIVE_EXPONENT
    return Check("c10_weak_boundedness", "bounded first moment and linear cumulative firing", ok,
                 {"S_E": P.S_E, "omega_E": rep.omega_E, "h1_ratio": ratio, "cum_exponent": exponent})


def check_strong_growth(ctx: Context) -> Check:
    P = ctx.params.with_(S_E=STRONG_S_E)
    rep = classify_regime(P)
    grid = build_grid(32, 320, STRONG_G_MAX, P)
    p0 = default_initial(grid, P, g_mean=STRONG_H1, g_var=1.0)
    res = run(p0, 3.0, P, EvolutionConfig(sample_every=0.03))
    s = res.series
    fit = dg.fit_rate(s["t"], s["h1"])
    ok = rep.zeta > 0 and fit.rate >= GROWTH_FRACTION * rep.zeta
    return Check("c11_strong_growth", "exponential growth of the first moment", ok,
                 {"S_E": P.S_E, "zeta": rep.zeta, "rate": fit.rate, "h1_end": s["h1"][-1],
                  "tail_mass_last_cell": float(res.final.field.values[:, -1].sum() * grid.cell_area)})


def check_entropy(ctx: Context) -> Check:
    rows = ctx.decay_run.series.rows
    ent = np.array([r["entropy"] for r in rows])
    flux = np.array([r["boundary_entropy"] for r in rows])
    fisher = np.array([r["fisher"] for r in rows])
    total = rows[-1]["cum_fisher"]
    ok = (
        np.isfinite(ent).all() and np.isfinite(flux).all() and np.isfinite(fisher).all()
        and bool((flux >= 0).all()) and math.isfinite(total)
    )
    return Check("c12_entropy_monitors", "entropy, boundary flux, Fisher term", ok,
                 {"max_entropy": ent.max(), "min_boundary_flux": flux.min(), "max_fisher": fisher.max(),
                  "fisher_integral": total})


def check_lq(ctx: Context) -> Check:
    rows = ctx.decay_run.series.rows
    lq = np.array([r["lq_monitor"] for r in rows])
    n2 = rows[-1]["cum_N2"]
    ok = np.isfinite(lq).all() and math.isfinite(n2)
    return Check("c13_lq_monitors", "weighted L2 norm and integral of N^2", ok,
                 {"max_lq": lq.max(), "final_lq": lq[-1], "N2_integral": n2})


def check_oracle(ctx: Context) -> Check:
    P = ctx.linear()
    c = ctx.coupling()
    t0 = time.perf_counter()
    res = simulate(P, ctx.particles, 10.0, 1e-3, seed=ctx.seed, frozen=c)
    elapsed = time.perf_counter() - t0
    z = -c.g_in / math.sqrt(c.a)
    ks = float(stats.kstest(res.ensemble.g, stats.truncnorm(z, np.inf, loc=c.g_in, scale=math.sqrt(c.a)).cdf).statistic)
    ref = ctx.steady(128, 256)[0]
    pde = firing_profile(ref, ref.grid, P).total
    rel = abs(res.mean_rate - pde) / pde
    ok = ks <= KS_TOL and rel <= RATE_TOL and elapsed <= ORACLE_RUNTIME
    return Check("c14_particle_oracle", "Monte Carlo agrees with the PDE", ok,
                 {"ks": ks, "rate_mc": res.mean_rate, "rate_pde": pde, "rel_diff": rel, "runtime_s": elapsed})


CHECKS = (
    check_marginal,
    check_flux,
    check_bounds,
    check_uniqueness,
    check_regimes,
    check_psi_bracket,
    check_conservation,
    check_linear_decay,
    check_moments,
    check_weak_bounded,
    check_strong_growth,
    check_entropy,
    check_lq,
    check_oracle,
)


def run_all(ctx: Context | None = None, only=None) -> list[Check]:
    """Run every check (or those whose number is in ``only``) in order."""
    ctx = ctx or Context()
    out = []
    for n, fn in enumerate(CHECKS, start=1):
        if only is not None and n not in only:
            continue
        t0 = time.perf_counter()
        chk = fn(ctx)
        log.info("%s %s (%.1f s)", chk.key, "PASS" if chk.passed else "FAIL", time.perf_counter() - t0)
        out.append(chk)
    return out


def report(checks: list[Check]) -> str:
    lines = [c.line() for c in checks]
    passed = sum(c.passed for c in checks)
    lines.append(f"summary: {'PASS' if passed == len(checks) else 'FAIL'} passed={passed} total={len(checks)}")
    return "\n".join(lines) + "\n"
