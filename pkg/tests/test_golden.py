"""Reference values from scripts/compute_golden.py on a 512 x 1024 mesh.

Coarser meshes must reproduce them within 2%.
"""

from __future__ import annotations

import pytest

from ifkinetic.fixed_point import evaluate_psi, find_fixed_point
from ifkinetic.grid import build_grid
from ifkinetic.model import ModelParams, coupling_from_rate
from ifkinetic.steady import firing_profile, steady_state

N_LINEAR = 3.25796077
PSI_WEAK_AT_1 = 3.83368022
N_STAR_WEAK = 9.546875
REL = 0.02


def test_linear_firing_rate(params):
    grid = build_grid(128, 256, 8.0, params)
    field = steady_state(grid, coupling_from_rate(0.0, 1.0, params), params)
    assert firing_profile(field, grid, params).total == pytest.approx(N_LINEAR, rel=REL)


def test_psi_weak_at_one():
    P = ModelParams(S_E=0.2)
    assert evaluate_psi(1.0, P, build_grid(128, 256, 8.0, P)).psi == pytest.approx(PSI_WEAK_AT_1, rel=REL)


def test_weak_fixed_point():
    P = ModelParams(S_E=0.2)
    res = find_fixed_point(P, (6.4, 12.8), build_grid(64, 128, 8.0, P), tol=1e-3)
    assert res.rate == pytest.approx(N_STAR_WEAK, rel=REL)
