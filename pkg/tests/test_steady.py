from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifkinetic import diagnostics as dg
from ifkinetic.grid import build_grid
from ifkinetic.model import ModelParams, ParameterError, coupling_from_rate, frozen_coupling
from ifkinetic.steady import (
    DensityField,
    SteadyConvergenceError,
    assemble,
    firing_profile,
    g_tridiagonal,
    marginal_g,
    read_density_csv,
    solve_null_vector,
    steady_state,
    v_flux_profile,
)

couplings = st.builds(frozen_coupling, st.floats(0.0, 5.0), st.floats(0.05, 3.0))


@settings(max_examples=25, deadline=None)
@given(couplings, st.floats(0.0, 1.0))
def test_operator_is_conservative_m_matrix(c, S_E):
    P = ModelParams(S_E=S_E)
    grid = build_grid(6, 10, 8.0, P)
    A = assemble(grid, c, P).matrix.toarray()
    assert np.abs(A.sum(axis=0)).max() <= 1e-10 * np.abs(A).max()
    off = A - np.diag(np.diag(A))
    assert off.max() <= 0.0
    assert np.diag(A).min() >= 0.0


@given(couplings)
def test_g_operator_symmetric_in_q(c):
    grid = build_grid(4, 12, 8.0, ModelParams())
    lower, _, upper = g_tridiagonal(grid, c, ModelParams())
    E = np.exp(-((grid.g_centers - c.g_in) ** 2) / (2 * c.a))
    np.testing.assert_allclose(lower * E[:-1], upper * E[1:], rtol=1e-12, atol=1e-300)


def test_mass_rate_vanishes(small_grid, linear_coupling, params):
    op = assemble(small_grid, linear_coupling, params)
    p = np.random.default_rng(0).uniform(size=small_grid.shape)
    assert abs(op.mass_rate(p)) <= 1e-10


def test_steady_solution_contract(small_steady, small_grid, linear_coupling, params):
    p = small_steady.values
    assert p.min() >= 0
    assert small_steady.mass == pytest.approx(1.0, abs=1e-12)
    op = assemble(small_grid, linear_coupling, params)
    assert np.abs(op.apply(p)).sum() <= 1e-10 * np.abs(p).sum()


def test_marginal_is_discrete_maxwellian(small_steady, small_grid, linear_coupling):
    M = dg.truncated_maxwellian(small_grid, linear_coupling)
    np.testing.assert_allclose(marginal_g(small_steady, small_grid), M, rtol=1e-7, atol=1e-12)


def test_marginal_converges_to_maxwellian(params, linear_coupling):
    errs = []
    for n in (16, 32, 64):
        grid = build_grid(n, 2 * n, 8.0, params)
        phi = marginal_g(steady_state(grid, linear_coupling, params), grid)
        M = dg.truncated_maxwellian(grid, linear_coupling, exact=True)
        errs.append(np.abs(phi - M).sum() / M.sum())
    assert errs[0] > errs[1] > errs[2]


def test_edge_flux_constant_and_equal_to_rate(small_steady, small_grid, params):
    F = v_flux_profile(small_steady, small_grid, params, where="edges")
    N = firing_profile(small_steady, small_grid, params).total
    np.testing.assert_allclose(F, N, rtol=1e-8)
    with pytest.raises(ValueError):
        v_flux_profile(small_steady, small_grid, params, where="middle")


def test_firing_profile_vanishes_below_g_F(small_steady, small_grid, params):
    prof = firing_profile(small_steady, small_grid, params)
    assert np.all(prof.N[~small_grid.reset_rows] == 0)
    assert np.all(prof.N >= 0) and prof.total > 0


def test_first_moment_in_bracket(small_steady, small_grid, linear_coupling):
    lo, hi = dg.first_moment_bracket(linear_coupling)
    h1 = dg.moments(small_steady, small_grid).h[1]
    assert lo - 0.05 * (hi - lo) <= h1 <= hi + 0.05 * (hi - lo)


def test_nonconvergence_reports_residual(small_grid, linear_coupling, params):
    op = assemble(small_grid, linear_coupling, params)
    with pytest.raises(SteadyConvergenceError) as info:
        solve_null_vector(op, tol=1e-300, max_iter=2)
    assert info.value.residual > 0


def test_bad_initial_guess_rejected(small_grid, linear_coupling, params):
    op = assemble(small_grid, linear_coupling, params)
    with pytest.raises(ValueError):
        solve_null_vector(op, initial=-np.ones(op.dimension))


def test_independent_starts_agree(small_grid, linear_coupling, params):
    op = assemble(small_grid, linear_coupling, params)
    rng = np.random.default_rng(7)
    a = solve_null_vector(op, initial=rng.uniform(0.1, 1, op.dimension))
    b = solve_null_vector(op, initial=rng.uniform(0.1, 1, op.dimension))
    assert np.abs(a.values - b.values).sum() * small_grid.cell_area <= 1e-9


def test_tiny_noise_rejected(small_grid, params):
    from ifkinetic.model import CouplingState

    with pytest.raises(ParameterError):
        assemble(small_grid, CouplingState(0.0, 1.0, 1e-14), params)


def test_q_requires_coupling(small_grid):
    with pytest.raises(ValueError):
        DensityField(np.ones(small_grid.shape), small_grid).q


def test_q_matrix_maps_q_to_outflow(small_steady, small_grid, linear_coupling, params):
    op = assemble(small_grid, linear_coupling, params)
    np.testing.assert_allclose(op.q_matrix() @ small_steady.q.ravel(), op.matrix @ small_steady.values.ravel(), atol=1e-12)


def test_density_csv_round_trip(tmp_path, small_steady, small_grid):
    path = tmp_path / "density.csv"
    small_steady.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "v,g,p"
    assert len(lines) == small_grid.I * small_grid.J + 1
    v1, g1, _ = map(float, lines[1].split(","))
    v2, g2, _ = map(float, lines[2].split(","))
    assert v1 == v2 and g2 > g1  # g varies fastest
    back = read_density_csv(path, small_grid)
    assert np.array_equal(back.values, small_steady.values)


def test_steady_with_rate_coupling(params):
    P = params.with_(S_E=0.2)
    grid = build_grid(16, 48, 12.0, P)
    field = steady_state(grid, coupling_from_rate(3.0, 1.0, P), P)
    assert field.mass == pytest.approx(1.0)
