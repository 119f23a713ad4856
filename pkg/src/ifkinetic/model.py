"""Model parameters, fluxes, rate coupling and regime thresholds.

The kinetic equation evolves the density p(v, g, t) of neurons with membrane
potential v in (0, V_F) and excitatory conductance g > 0:

    dp/dt + d/dv[J_v p] + d/dg[J_g p] - (a / sigma_E) d2p/dg2 = 0

with J_v = -g_L v + g (V_E - v) and J_g = (g_in - g) / sigma_E.  The network
closes the equation through the total firing rate, which sets g_in and a.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

A_MIN = 1e-12


class ParameterError(ValueError):
    """Raised when a parameter violates a structural constraint."""


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the voltage-conductance model.

    The reset potential V_R is fixed to 0.  ``nu`` is the constant external
    rate used by steady computations; ``nu_schedule`` optionally overrides it
    in time-dependent runs as a piecewise-constant sequence of
    ``(t_start, nu)`` pairs.
    """

    g_L: float = 1.0
    V_E: float = 4.0
    V_F: float = 1.0
    sigma_E: float = 1.0
    S_E: float = 0.0
    f_E: float = 1.0
    N_E: float = 1.0
    nu: float = 1.0
    nu_m: float | None = None
    nu_M: float | None = None
    nu_schedule: tuple[tuple[float, float], ...] = field(default=())

    V_R: float = field(default=0.0, init=False)

    def __post_init__(self) -> None:
        # nu bounds default to the constant rate
        if self.nu_m is None:
            object.__setattr__(self, "nu_m", min([self.nu, *(r for _, r in self.nu_schedule)]))
        if self.nu_M is None:
            object.__setattr__(self, "nu_M", max([self.nu, *(r for _, r in self.nu_schedule)]))
        object.__setattr__(
            self, "nu_schedule", tuple((float(t), float(r)) for t, r in self.nu_schedule)
        )
        self.validate()

    def validate(self) -> None:
        checks = [
            (self.g_L > 0, "g_L must be > 0"),
            (self.V_F > 0, "V_F must be > 0 (reset V_R = 0 < V_F)"),
            (self.V_F < self.V_E, "V_F must be < V_E"),
            (self.sigma_E > 0, "sigma_E must be > 0"),
            (self.S_E >= 0, "S_E must be >= 0"),
            (self.f_E > 0, "f_E must be > 0"),
            (self.N_E > 0, "N_E must be > 0"),
            (0 < self.nu_m <= self.nu_M, "need 0 < nu_m <= nu_M"),
            (self.nu_m <= self.nu <= self.nu_M, "nu must lie in [nu_m, nu_M]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ParameterError(msg)
        times = [t for t, _ in self.nu_schedule]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ParameterError("nu_schedule times must be strictly increasing")
        for _, r in self.nu_schedule:
            if not self.nu_m <= r <= self.nu_M:
                raise ParameterError("nu_schedule rates must lie in [nu_m, nu_M]")

    @property
    def g_F(self) -> float:
        """Conductance at which J_v vanishes on the threshold."""
        return self.g_L * self.V_F / (self.V_E - self.V_F)

    def nu_at(self, t: float) -> float:
        """External rate at time ``t``."""
        rate = self.nu
        for start, r in self.nu_schedule:
            if t >= start:
                rate = r
            else:
                break
        return rate

    def with_(self, **changes) -> ModelParams:
        return replace(self, **changes)


@dataclass(frozen=True)
class CouplingState:
    """Total firing rate together with the drift/noise it induces."""

    total_rate: float
    g_in: float
    a: float


@dataclass(frozen=True)
class RegimeReport:
    g_F: float
    lambda_E: float
    omega_E: float
    zeta: float
    weak_exists: bool
    strong_no_steady: bool
    weak_ratio: float
    strong_ratio: float
    coupling_ratio: float  # S_E / f_E, no cap is imposed


def flux_v(v, g, params: ModelParams):
    """Voltage flux -g_L v + g (V_E - v); broadcasts over arrays."""
    return -params.g_L * v + g * (params.V_E - v)


def flux_g(g, coupling: CouplingState, params: ModelParams):
    """Conductance drift (g_in - g) / sigma_E."""
    return (coupling.g_in - g) / params.sigma_E


def coupling_from_rate(total_rate: float, nu: float, params: ModelParams) -> CouplingState:
    """Build (g_in, a) from the network rate and the external rate."""
    if not total_rate >= 0:
        raise ParameterError(f"total rate must be >= 0, got {total_rate}")
    if not params.nu_m <= nu <= params.nu_M:
        raise ParameterError(f"nu={nu} outside [{params.nu_m}, {params.nu_M}]")
    g_in = params.f_E * nu + params.S_E * total_rate
    a = (params.f_E**2 * nu + params.S_E**2 / params.N_E * total_rate) / (2 * params.sigma_E)
    return CouplingState(total_rate=float(total_rate), g_in=g_in, a=a)


def frozen_coupling(g_in: float, a: float) -> CouplingState:
    """Coupling with prescribed drift center and noise, detached from any rate."""
    if g_in < 0:
        raise ParameterError("g_in must be >= 0")
    if a < A_MIN:
        raise ParameterError(f"noise intensity a={a} below a_min={A_MIN}")
    return CouplingState(total_rate=math.nan, g_in=float(g_in), a=float(a))


def classify_regime(params: ModelParams, nu: float | None = None) -> RegimeReport:
    """Growth/decay constants and the existence/non-existence flags."""
    nu = params.nu if nu is None else nu
    S, VE, VF = params.S_E, params.V_E, params.V_F
    lambda_E = (S / params.sigma_E + S**2 / (2 * params.N_E * params.sigma_E)) / VF
    omega_E = ((VE / VF) * (S + S**2 / (2 * params.N_E)) - 1.0) / params.sigma_E
    zeta = (S * (VE - VF) / VF - 1.0) / params.sigma_E
    weak_ratio = VE / VF * S
    strong_ratio = (VE - VF) / VF * S
    # noise condition with the leak made explicit: (V_E - V_F) f_E nu > g_L V_F
    strong_noise = (VE - VF) * params.f_E * nu > params.g_L * VF
    return RegimeReport(
        g_F=params.g_F,
        lambda_E=lambda_E,
        omega_E=omega_E,
        zeta=zeta,
        weak_exists=weak_ratio < 1,
        strong_no_steady=bool(strong_ratio > 1 and strong_noise),
        weak_ratio=weak_ratio,
        strong_ratio=strong_ratio,
        coupling_ratio=S / params.f_E,
    )


def maxwellian_exponent(g, coupling: CouplingState):
    """(g - g_in)^2 / (2a), the exponent of the stationary g-profile."""
    return (np.asarray(g) - coupling.g_in) ** 2 / (2 * coupling.a)
