"""Reference values on fine meshes, frozen into tests/test_golden.py.

Usage: python scripts/compute_golden.py [--I 512 --J 1024]
"""

from __future__ import annotations

import argparse
import time

from ifkinetic.fixed_point import evaluate_psi, find_fixed_point
from ifkinetic.grid import build_grid
from ifkinetic.model import ModelParams, coupling_from_rate
from ifkinetic.steady import firing_profile, steady_state


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--I", type=int, default=512)
    ap.add_argument("--J", type=int, default=1024)
    ap.add_argument("--g-max", type=float, default=8.0)
    args = ap.parse_args()

    linear = ModelParams()
    grid = build_grid(args.I, args.J, args.g_max, linear)
    t0 = time.perf_counter()
    field = steady_state(grid, coupling_from_rate(0.0, linear.nu, linear), linear)
    print(f"N_linear = {firing_profile(field, grid, linear).total:.8f}  ({time.perf_counter() - t0:.1f} s)")

    weak = ModelParams(S_E=0.2)
    print(f"psi_weak_at_1 = {evaluate_psi(1.0, weak, grid).psi:.8f}")
    res = find_fixed_point(weak, (6.4, 12.8), grid, tol=1e-4)
    print(f"N_star_weak = {res.rate:.8f}  (excess {res.excess:.2e}, {res.iterations} iterations)")


if __name__ == "__main__":
    main()
