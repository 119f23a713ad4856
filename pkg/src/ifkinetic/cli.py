"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 solver failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import config as cfgmod
from . import verify
from .diagnostics import truncated_maxwellian
from .evolution import EvolutionConfig, StabilityError, default_initial, run
from .fixed_point import DEFAULT_LADDER, BracketError, locate_fixed_point, scan_psi, self_consistent_state
from .grid import grid_for_coupling
from .model import ParameterError, coupling_from_rate
from .particles import ParticleError, simulate, write_histogram_csv
from .steady import SteadyConvergenceError, firing_profile, marginal_g, steady_state

log = logging.getLogger("ifkinetic")

EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_VERIFY = 3


def _write_columns(path, header, *cols) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([f"{v:.17g}" for v in row])


def cmd_steady(cfg: cfgmod.RunConfig) -> int:
    params = cfg.params
    s = cfg["solver"]
    c = coupling_from_rate(s["rate"], params.nu, params)
    grid = grid_for_coupling(cfg.grid, c)
    field = steady_state(grid, c, params, tol=s["tol"], max_iter=s["max_iter"])
    prof = firing_profile(field, grid, params)
    field.to_csv(cfg.path("density.csv"))
    _write_columns(cfg.path("marginal.csv"), ["g", "phi", "maxwellian"],
                   grid.g_centers, marginal_g(field, grid), truncated_maxwellian(grid, c))
    _write_columns(cfg.path("firing.csv"), ["g", "N"], grid.g_centers, prof.N)
    print(f"N_total: {prof.total:.12g}")
    print(f"mass: {field.mass:.15g}")
    return 0


def _xs(cfg) -> tuple[float, ...]:
    return cfg["scan"]["xs"] or DEFAULT_LADDER


def cmd_psi_scan(cfg: cfgmod.RunConfig) -> int:
    scan = scan_psi(cfg.params, _xs(cfg), cfg.grid, cfg["solver"]["tol"])
    scan.to_csv(cfg.path("psi_scan.csv"))
    for lo, hi in scan.sign_changes:
        print(f"sign_change: [{lo:.6g}, {hi:.6g}]")
    failed = [s.x for s in scan.samples if s.error is not None]
    print(f"samples: {len(scan.samples)} failed: {len(failed)}")
    return EXIT_SOLVER if failed else 0


def cmd_fixed_point(cfg: cfgmod.RunConfig) -> int:
    s = cfg["solver"]
    res, scan = locate_fixed_point(cfg.params, cfg.grid, _xs(cfg), s["fp_tol"], cfg["scan"]["x_max"], s["tol"])
    scan.to_csv(cfg.path("psi_scan.csv"))
    if not res.found:
        print(f"N_star: none ({res.message})")
        return 0
    field = self_consistent_state(cfg.params, res.rate, cfg.grid, s["tol"])
    field.to_csv(cfg.path("fixed_point_density.csv"))
    print(f"N_star: {res.rate:.12g}")
    print(f"excess: {res.excess:.3e} iterations: {res.iterations}")
    return 0


def cmd_evolve(cfg: cfgmod.RunConfig) -> int:
    params, grid = cfg.params, cfg.grid
    r, s = cfg["run"], cfg["solver"]
    p0 = default_initial(grid, params, g_mean=r["g_mean"], g_var=r["g_var"])
    ec = EvolutionConfig(
        sample_every=r["sample_every"],
        snapshot_times=r["snapshot_times"],
        K=r["K"],
        q=r["q"],
        ell=r["ell"],
        safety=s["safety"],
        dt_max=s["dt_max"],
        g_scheme=s["g_scheme"],
    )
    res = run(p0, r["T"], params, ec)
    res.series.to_csv(cfg.path("timeseries.csv"), cfg.path("timeseries_aux.csv"))
    for t, snap in sorted(res.snapshots.items()):
        snap.to_csv(cfg.path(f"snapshot_t{t:.6g}.csv"))
    print(f"steps: {res.steps} dt_first: {res.metadata['dt_first']:.6g}")
    print(f"mass_final: {res.metadata['mass_final']:.15g}")
    print(f"N_total_final: {res.series['N_total'][-1]:.12g}")
    return 0


def cmd_oracle(cfg: cfgmod.RunConfig) -> int:
    params, grid, o = cfg.params, cfg.grid, cfg["oracle"]
    frozen = coupling_from_rate(0.0, params.nu, params) if o["mode"] == "frozen" else None
    res = simulate(params, o["n"], o["T"], o["dt"], seed=o["seed"], grid=grid, frozen=frozen,
                   sample_every=cfg["run"]["sample_every"], K=cfg["run"]["K"])
    res.series.to_csv(cfg.path("oracle_timeseries.csv"))
    write_histogram_csv(res.ensemble, grid, cfg.path("oracle_histogram.csv"))
    print(f"rate: {res.mean_rate:.12g} window: [{res.rate_window[0]:.6g}, {res.rate_window[1]:.6g}]")
    print(f"h1: {np.mean(res.ensemble.g):.12g}")
    return 0


def cmd_verify(cfg: cfgmod.RunConfig, only=None) -> int:
    ctx = verify.Context(params=cfg.params.with_(S_E=0.0), seed=cfg["oracle"]["seed"], particles=cfg["oracle"]["n"])
    checks = verify.run_all(ctx, only)
    text = verify.report(checks)
    cfg.path("verify_report.txt").write_text(text)
    sys.stdout.write(text)
    return 0 if all(c.passed for c in checks) else EXIT_VERIFY


COMMANDS = {
    "steady": (cmd_steady, "stationary density for a frozen coupling"),
    "psi-scan": (cmd_psi_scan, "evaluate the firing-rate map on a ladder of rates"),
    "fixed-point": (cmd_fixed_point, "locate a self-consistent network rate"),
    "evolve": (cmd_evolve, "time-dependent run with rate feedback"),
    "oracle": (cmd_oracle, "Monte Carlo particle simulation"),
    "verify": (cmd_verify, "run the acceptance checks and write a report"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ifkinetic",
        description="Kinetic voltage-conductance solvers for integrate-and-fire networks.",
        epilog=cfgmod.help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, doc) in COMMANDS.items():
        p = sub.add_parser(name, help=doc, description=doc, epilog=cfgmod.help_text(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="configuration file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one configuration key (repeatable)")
        if name == "verify":
            p.add_argument("--only", default=None, help="comma-separated criterion numbers")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = cfgmod.load(args.config, args.set)
        only = None
        if getattr(args, "only", None):
            try:
                only = {int(x) for x in args.only.split(",")}
            except ValueError:
                raise cfgmod.ConfigError("--only", f"expected comma-separated integers, got {args.only!r}") from None
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except (cfgmod.ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    fn = COMMANDS[args.command][0]
    try:
        return fn(cfg, only) if args.command == "verify" else fn(cfg)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SteadyConvergenceError, StabilityError, BracketError, ParticleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
