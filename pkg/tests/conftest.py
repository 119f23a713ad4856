from __future__ import annotations

import pytest

from ifkinetic.grid import build_grid
from ifkinetic.model import ModelParams, coupling_from_rate
from ifkinetic.steady import steady_state

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def linear_coupling(params):
    return coupling_from_rate(0.0, params.nu, params)


@pytest.fixture(scope="session")
def small_grid(params):
    return build_grid(32, 64, 8.0, params)


@pytest.fixture(scope="session")
def small_steady(small_grid, linear_coupling, params):
    return steady_state(small_grid, linear_coupling, params)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
