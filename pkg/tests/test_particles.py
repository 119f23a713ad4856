from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from ifkinetic.grid import build_grid
from ifkinetic.model import ModelParams, coupling_from_rate, frozen_coupling
from ifkinetic.particles import ParticleEnsemble, histogram, simulate, write_histogram_csv

P = ModelParams()
C = coupling_from_rate(0.0, 1.0, P)


def test_state_stays_in_domain():
    res = simulate(P, 500, 1.0, 1e-3, seed=1, frozen=C)
    assert res.ensemble.v.min() >= 0 and res.ensemble.v.max() <= P.V_F
    assert res.ensemble.g.min() >= 0
    assert res.ensemble.spikes > 0


def test_seed_determinism():
    a = simulate(P, 300, 0.5, 1e-3, seed=4, frozen=C).ensemble
    b = simulate(P, 300, 0.5, 1e-3, seed=4, frozen=C).ensemble
    c = simulate(P, 300, 0.5, 1e-3, seed=5, frozen=C).ensemble
    assert np.array_equal(a.v, b.v) and np.array_equal(a.g, b.g) and a.spikes == b.spikes
    assert not np.array_equal(a.g, c.g)


def test_no_spikes_below_g_F():
    ens = ParticleEnsemble(v=np.linspace(0, 0.9, 50), g=np.zeros(50), t=0.0, seed=0)
    res = simulate(P, 50, 2.0, 1e-3, frozen=frozen_coupling(0.0, 1e-12), ensemble=ens)
    assert res.ensemble.spikes == 0
    assert res.ensemble.g.max() < P.g_F


def test_g_marginal_is_maxwellian_and_mean_tracks_steady(small_steady, small_grid):
    n = 20_000
    res = simulate(P, n, 4.0, 2e-3, seed=11, frozen=C)
    z = -C.g_in / math.sqrt(C.a)
    law = stats.truncnorm(z, np.inf, loc=C.g_in, scale=math.sqrt(C.a))
    assert stats.kstest(res.ensemble.g, law.cdf).statistic <= 3 / math.sqrt(n)
    assert abs(res.ensemble.g.mean() - law.mean()) <= 4 * law.std() / math.sqrt(n)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        simulate(P, 0, 1.0, frozen=C)
    with pytest.raises(ValueError):
        simulate(P, 10, 1.0, dt=-1.0, frozen=C)


def test_mean_field_series_and_histogram(tmp_path):
    Q = P.with_(S_E=0.2)
    grid = build_grid(8, 16, 16.0, Q)
    res = simulate(Q, 2000, 0.5, 1e-3, seed=2, grid=grid, sample_every=0.1)
    assert len(res.series) == 6
    assert res.series["g_in"][-1] > 1.0  # rate feedback raised the drift center
    assert histogram(res.ensemble, grid).sum() == 2000
    write_histogram_csv(res.ensemble, grid, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "v,g,count" and len(lines) == 8 * 16 + 1
