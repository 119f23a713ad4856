from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ifkinetic.model import (
    ModelParams,
    ParameterError,
    classify_regime,
    coupling_from_rate,
    flux_g,
    flux_v,
    frozen_coupling,
)

pos = st.floats(0.05, 10.0)


@st.composite
def model_params(draw):
    V_F = draw(st.floats(0.1, 5.0))
    V_E = V_F + draw(st.floats(0.1, 10.0))
    return ModelParams(
        g_L=draw(pos), V_E=V_E, V_F=V_F, sigma_E=draw(pos), S_E=draw(st.floats(0.0, 2.0)),
        f_E=draw(pos), N_E=draw(st.floats(1.0, 100.0)), nu=draw(pos),
    )


def test_defaults_give_one_third(params):
    assert params.g_F == pytest.approx(1 / 3)
    assert params.V_R == 0.0


@pytest.mark.parametrize(
    "changes, word",
    [
        (dict(V_F=2.0, V_E=1.0), "V_F"),
        (dict(g_L=0.0), "g_L"),
        (dict(sigma_E=-1.0), "sigma_E"),
        (dict(S_E=-0.1), "S_E"),
        (dict(nu=2.0, nu_M=1.5), "nu"),
    ],
)
def test_invalid_parameters_rejected(changes, word):
    with pytest.raises(ParameterError, match=word):
        ModelParams(**changes)


def test_schedule_and_bounds():
    p = ModelParams(nu_schedule=((0.0, 1.0), (2.0, 1.5)))
    assert p.nu_M == 1.5 and p.nu_m == 1.0
    assert p.nu_at(1.0) == 1.0 and p.nu_at(2.0) == 1.5
    with pytest.raises(ParameterError):
        ModelParams(nu_schedule=((1.0, 1.0), (0.5, 1.0)))


def test_flux_v_examples(params):
    assert flux_v(params.V_F, params.g_F, params) == pytest.approx(0.0, abs=1e-15)
    assert flux_v(0.0, 1.0, params) == 4.0
    assert flux_v(1.0, 0.0, params) == -1.0


def test_flux_g_sign(params):
    c = coupling_from_rate(0.0, 1.0, params)
    assert flux_g(0.0, c, params) > 0 > flux_g(5.0, c, params)


@given(model_params(), st.floats(0.0, 1.0))
def test_flux_vanishes_at_threshold_crossover(p, _):
    assert flux_v(p.V_F, p.g_F, p) == pytest.approx(0.0, abs=1e-9 * (1 + p.g_L * p.V_F))


@given(model_params(), st.floats(1e-3, 50.0))
def test_flux_outgoing_above_g_F(p, dg):
    g = p.g_F + dg
    assert flux_v(p.V_F, g, p) > 0
    assert flux_v(0.0, g, p) > 0


def test_coupling_examples(params):
    c = coupling_from_rate(0.0, 1.0, params)
    assert (c.g_in, c.a) == (1.0, 0.5)
    c = coupling_from_rate(2.0, 1.0, params.with_(S_E=0.5))
    assert c.g_in == pytest.approx(2.0)
    assert c.a == pytest.approx((1 + 0.25 * 2) / 2)
    with pytest.raises(ParameterError):
        coupling_from_rate(-1.0, 1.0, params)
    with pytest.raises(ParameterError):
        coupling_from_rate(1.0, 3.0, params)


@given(model_params(), st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_coupling_affine_and_monotone(p, x, y):
    cx, cy = coupling_from_rate(x, p.nu, p), coupling_from_rate(y, p.nu, p)
    cm = coupling_from_rate(0.5 * (x + y), p.nu, p)
    assert cm.g_in == pytest.approx(0.5 * (cx.g_in + cy.g_in), rel=1e-12, abs=1e-12)
    assert cm.a == pytest.approx(0.5 * (cx.a + cy.a), rel=1e-12, abs=1e-12)
    if p.S_E >= 1e-3 and y - x >= 1e-3:
        assert cx.g_in < cy.g_in and cx.a < cy.a


def test_frozen_coupling_rejects_tiny_noise():
    with pytest.raises(ParameterError):
        frozen_coupling(1.0, 1e-14)
    assert math.isnan(frozen_coupling(1.0, 0.5).total_rate)


def test_regime_examples(params):
    weak = classify_regime(params.with_(S_E=0.2))
    assert weak.weak_exists and not weak.strong_no_steady
    assert weak.weak_ratio == pytest.approx(0.8)
    strong = classify_regime(params.with_(S_E=0.4))
    assert strong.strong_no_steady and strong.strong_ratio == pytest.approx(1.2)
    assert classify_regime(params.with_(sigma_E=2.0)).omega_E == pytest.approx(-0.5)


@given(model_params())
def test_regime_identities(p):
    r = classify_regime(p)
    S, s = p.S_E, p.sigma_E
    assert r.zeta * s == pytest.approx(S * (p.V_E - p.V_F) / p.V_F - 1, rel=1e-12, abs=1e-12)
    assert r.omega_E * s == pytest.approx(p.V_E * (S + S * S / (2 * p.N_E)) / p.V_F - 1, rel=1e-12, abs=1e-12)
    assert r.lambda_E * p.V_F * s == pytest.approx(S + S * S / (2 * p.N_E), rel=1e-12, abs=1e-12)
    # zeta < omega_E: the growth bound never exceeds the decay bound
    assert r.zeta <= r.omega_E + 1e-12
    assert r.weak_exists == (r.weak_ratio < 1)
