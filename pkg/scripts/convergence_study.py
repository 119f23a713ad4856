"""Refinement study of the linear stationary solve.

Prints, per mesh, the L1 error of the g-marginal against the Maxwellian
(exact normalization), the largest deviation of the v-flux from N, the
total firing rate and the solve time.

Usage: python scripts/convergence_study.py [--levels 32 64 128 256]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ifkinetic.diagnostics import truncated_maxwellian
from ifkinetic.grid import build_grid
from ifkinetic.model import ModelParams, coupling_from_rate
from ifkinetic.steady import firing_profile, marginal_g, steady_state, v_flux_profile


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--levels", type=int, nargs="+", default=[32, 64, 128, 256])
    ap.add_argument("--g-max", type=float, default=8.0)
    args = ap.parse_args()

    P = ModelParams()
    c = coupling_from_rate(0.0, P.nu, P)
    print(f"{'I':>5} {'J':>5} {'marginal_l1':>12} {'flux_dev':>10} {'N':>10} {'seconds':>8}")
    for I in args.levels:
        grid = build_grid(I, 2 * I, args.g_max, P)
        t0 = time.perf_counter()
        field = steady_state(grid, c, P)
        dt = time.perf_counter() - t0
        M = truncated_maxwellian(grid, c, exact=True)
        err = np.abs(marginal_g(field, grid) - M).sum() / M.sum()
        N = firing_profile(field, grid, P).total
        dev = np.abs(v_flux_profile(field, grid, P) - N).max() / N
        print(f"{I:5d} {2 * I:5d} {err:12.4e} {dev:10.4e} {N:10.6f} {dt:8.2f}")


if __name__ == "__main__":
    main()
