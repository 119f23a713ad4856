from __future__ import annotations

import numpy as np
import pytest

from ifkinetic import diagnostics as dg
from ifkinetic.evolution import (
    EvolutionConfig,
    StabilityError,
    TimeSeries,
    cfl_dt,
    cfl_limits,
    default_initial,
    initial_state,
    run,
    step,
)
from ifkinetic.grid import build_grid
from ifkinetic.model import ModelParams, frozen_coupling
from ifkinetic.steady import DensityField


def test_default_initial_has_unit_mass(small_grid, params):
    p0 = default_initial(small_grid, params)
    assert p0.mass == pytest.approx(1.0, abs=1e-14)
    assert p0.values.min() >= 0


def test_mass_preserved_over_ten_thousand_steps(params):
    P = params.with_(S_E=0.2)
    grid = build_grid(8, 16, 8.0, P)
    state = initial_state(default_initial(grid, P), P)
    dt = cfl_dt(state, grid, P)
    for _ in range(10_000):
        state = step(state, dt, 1.0, P, grid)
    assert abs(state.field.mass - 1.0) <= 1e-10
    assert state.field.values.min() >= 0


def test_steady_state_is_fixed_point_of_step(small_steady, small_grid, params):
    state = initial_state(small_steady, params)
    dt = cfl_dt(state, small_grid, params)
    for _ in range(100):
        state = step(state, dt, 1.0, params, small_grid)
    drift = np.abs(state.field.values - small_steady.values).sum() * small_grid.cell_area
    assert drift <= 1e-8


def test_split_scheme_stays_close_to_steady(small_steady, small_grid, params):
    state = initial_state(small_steady, params)
    dt = cfl_dt(state, small_grid, params)
    for _ in range(100):
        state = step(state, dt, 1.0, params, small_grid, g_scheme="split")
    drift = np.abs(state.field.values - small_steady.values).sum() * small_grid.cell_area
    assert drift <= 5 * (dt * 100 + small_grid.h_g)


def _relaxed_error(params, J, scheme):
    grid = build_grid(4, J, 8.0, params)
    c = frozen_coupling(2.0, 0.5)
    p0 = default_initial(grid, params, g_mean=5.0, g_var=0.3)
    cfg = EvolutionConfig(sample_every=1.0, frozen=c, transport=False, g_scheme=scheme, dt_max=0.05)
    res = run(p0, 15.0, params, cfg)
    phi = res.final.field.values.sum(axis=0) * grid.h_v / grid.V_F
    return np.abs(phi - dg.truncated_maxwellian(grid, c)).sum() * grid.h_g


def test_pure_diffusion_relaxes_to_maxwellian(params):
    assert _relaxed_error(params, 64, "fitted") <= 1e-5
    # upwind drift is first order: the error halves with h_g
    coarse, fine = _relaxed_error(params, 32, "split"), _relaxed_error(params, 64, "split")
    assert fine <= 0.6 * coarse and fine <= 0.06


def test_cfl_examples(params):
    grid = build_grid(4, 8, 8.0, params)
    state = initial_state(default_initial(grid, params), params)
    lim_v, _ = cfl_limits(grid, state.coupling, params)
    assert cfl_dt(state, grid, params, safety=1.0, dt_max=1.0) <= lim_v
    wide = build_grid(4, 8, 16.0, params)
    assert cfl_limits(wide, state.coupling, params)[0] == pytest.approx(0.5 * lim_v)
    with pytest.raises(ValueError):
        cfl_dt(state, grid, params, safety=0.0)


def test_oversized_step_raises(params):
    grid = build_grid(16, 32, 8.0, params)
    state = initial_state(default_initial(grid, params), params)
    with pytest.raises(StabilityError):
        step(state, 50 * cfl_dt(state, grid, params), 1.0, params, grid)
    with pytest.raises(ValueError):
        step(state, 1e-4, 1.0, params, grid, g_scheme="spectral")


def test_run_records_and_snapshots(tmp_path, params):
    grid = build_grid(8, 16, 8.0, params)
    res = run(default_initial(grid, params), 0.2, params, EvolutionConfig(sample_every=0.05, snapshot_times=(0.1,)))
    t = res.series["t"]
    np.testing.assert_allclose(t, [0, 0.05, 0.1, 0.15, 0.2], atol=1e-12)
    assert list(res.snapshots) == [0.1]
    assert np.all(np.abs(res.series["mass"] - 1) <= 1e-12)
    h1, h2 = res.series["h1"], res.series["h2"]
    assert np.all(h1**2 <= h2)
    res.series.to_csv(tmp_path / "ts.csv", tmp_path / "aux.csv")
    header = (tmp_path / "ts.csv").read_text().splitlines()[0]
    assert header == "t,mass,N_total,g_in,a,psi,h1,h2,h3,h4,f,entropy,lq_monitor,chi2"


def test_initial_mass_checked(small_grid, params):
    bad = DensityField(np.ones(small_grid.shape), small_grid)
    with pytest.raises(ValueError):
        run(bad, 0.1, params)


def test_time_series_requires_increasing_times():
    ts = TimeSeries()
    ts.append({"t": 0.0})
    with pytest.raises(ValueError):
        ts.append({"t": 0.0})


def test_moment_residuals_shrink_with_refinement():
    P = ModelParams(S_E=0.2)
    errs = []
    for n, every in ((16, 0.008), (32, 0.004)):
        grid = build_grid(n, 2 * n, 8.0, P)
        res = run(default_initial(grid, P, g_mean=3.0, g_var=0.5), 1.0, P, EvolutionConfig(sample_every=every))
        errs.append(dg.moment_residuals(res.series.rows, P))
    for k in errs[0]:
        assert errs[1][k] < errs[0][k] < 0.2
