"""Run configuration: an INI-style file plus ``section.key=value`` overrides.

Every key is declared in :data:`SCHEMA` with its type, default and unit.
Unknown sections or keys are rejected, and the assembled configuration is
validated against the module preconditions before anything runs.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

from .grid import GridError, build_grid
from .model import ModelParams, ParameterError


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class Key:
    kind: str  # float, int, str, floats, schedule, optfloat
    default: object
    unit: str
    help: str


SCHEMA: dict[str, dict[str, Key]] = {
    "model": {
        "g_L": Key("float", 1.0, "1/time", "leak conductance"),
        "V_E": Key("float", 4.0, "voltage", "excitatory reversal potential"),
        "V_F": Key("float", 1.0, "voltage", "firing threshold (reset is 0)"),
        "sigma_E": Key("float", 1.0, "time", "conductance relaxation time"),
        "S_E": Key("float", 0.0, "conductance x time", "network coupling strength"),
        "f_E": Key("float", 1.0, "conductance x time", "external synaptic strength"),
        "N_E": Key("float", 1.0, "neurons", "number of presynaptic neurons"),
        "nu": Key("float", 1.0, "1/time", "external input rate"),
        "nu_m": Key("optfloat", None, "1/time", "lower bound on the external rate (default: min rate)"),
        "nu_M": Key("optfloat", None, "1/time", "upper bound on the external rate (default: max rate)"),
        "nu_schedule": Key("schedule", (), "time:1/time", "piecewise-constant rate, e.g. '0:1, 5:1.5'"),
    },
    "grid": {
        "I": Key("int", 128, "cells", "cells along v"),
        "J": Key("int", 256, "cells", "cells along g"),
        "g_max": Key("float", 8.0, "conductance", "upper end of the g domain"),
    },
    "solver": {
        "tol": Key("float", 1e-10, "1", "relative residual of the stationary solve"),
        "max_iter": Key("int", 500, "iterations", "inverse-iteration cap"),
        "rate": Key("float", 0.0, "1/time", "assumed network rate for 'steady'"),
        "fp_tol": Key("float", 1e-3, "1/time", "fixed-point tolerance on |Psi(x) - x|"),
        "safety": Key("float", 0.9, "1", "CFL safety factor in (0, 1]"),
        "dt_max": Key("float", 1e-2, "time", "largest evolution step"),
        "g_scheme": Key("str", "fitted", "-", "g-substep: 'fitted' or 'split'"),
    },
    "run": {
        "T": Key("float", 5.0, "time", "evolution horizon"),
        "sample_every": Key("float", 0.05, "time", "time-series cadence"),
        "snapshot_times": Key("floats", (), "time", "comma-separated snapshot times"),
        "K": Key("int", 4, "1", "highest g-moment recorded"),
        "q": Key("float", 2.0, "1", "exponent of the weighted L^q monitor"),
        "ell": Key("float", 2.0, "1", "weight exponent of the L^q monitor"),
        "g_mean": Key("optfloat", None, "conductance", "initial g mean (default f_E nu)"),
        "g_var": Key("optfloat", None, "conductance^2", "initial g variance (default a at zero rate)"),
    },
    "oracle": {
        "n": Key("int", 100_000, "particles", "ensemble size"),
        "T": Key("float", 10.0, "time", "simulated horizon"),
        "dt": Key("float", 1e-3, "time", "Euler-Maruyama step"),
        "seed": Key("int", 12345, "-", "random seed"),
        "mode": Key("str", "frozen", "-", "'frozen' (zero-rate coupling) or 'mean-field'"),
    },
    "scan": {
        "xs": Key("floats", (), "1/time", "rates to scan (default: 0 and 0.1 * 2^k, k = 0..8)"),
        "x_max": Key("float", 100.0, "1/time", "end of the automatic bracket extension"),
    },
    "output": {
        "directory": Key("str", "out", "path", "output directory"),
        "prefix": Key("str", "", "-", "file name prefix"),
    },
}


def _parse(key: str, spec: Key, raw: str):
    raw = raw.strip()
    try:
        if spec.kind == "float":
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError("not finite")
            return value
        if spec.kind == "optfloat":
            return None if raw.lower() in ("", "none") else float(raw)
        if spec.kind == "int":
            return int(raw)
        if spec.kind == "str":
            return raw
        if spec.kind == "floats":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if spec.kind == "schedule":
            pairs = []
            for item in raw.split(","):
                if item.strip():
                    t, r = item.split(":")
                    pairs.append((float(t), float(r)))
            return tuple(pairs)
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {raw!r} as {spec.kind} ({exc})") from None
    raise AssertionError(spec.kind)


@dataclass(frozen=True)
class RunConfig:
    values: dict[str, dict[str, object]]

    def __getitem__(self, section: str) -> dict[str, object]:
        return self.values[section]

    @property
    def params(self) -> ModelParams:
        return ModelParams(**self.values["model"])

    @property
    def grid(self):
        g = self.values["grid"]
        return build_grid(g["I"], g["J"], g["g_max"], self.params)

    @property
    def output_dir(self) -> Path:
        return Path(self.values["output"]["directory"])

    def path(self, name: str) -> Path:
        return self.output_dir / f"{self.values['output']['prefix']}{name}"


def defaults() -> dict[str, dict[str, object]]:
    return {s: {k: spec.default for k, spec in keys.items()} for s, keys in SCHEMA.items()}


def load(path: str | Path | None = None, overrides=()) -> RunConfig:
    """Read ``path`` (optional), apply ``section.key=value`` overrides, validate."""
    values = defaults()
    if path is not None:
        cp = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None)
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(str(path), str(exc)) from None
        for section in cp.sections():
            for key, raw in cp.items(section):
                _set(values, f"{section}.{key}", raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like section.key=value")
        name, raw = item.split("=", 1)
        _set(values, name.strip(), raw)
    cfg = RunConfig(values)
    validate(cfg)
    return cfg


def _set(values, name: str, raw: str) -> None:
    if "." not in name:
        raise ConfigError(name, "expected section.key")
    section, key = name.split(".", 1)
    if section not in SCHEMA:
        raise ConfigError(name, f"unknown section {section!r}")
    if key not in SCHEMA[section]:
        raise ConfigError(name, f"unknown key {key!r} in [{section}]")
    values[section][key] = _parse(name, SCHEMA[section][key], raw)


def validate(cfg: RunConfig) -> None:
    """Check every precondition up front so failures name a key."""
    try:
        cfg.params
    except ParameterError as exc:
        raise ConfigError(_model_key(str(exc)), str(exc)) from None
    try:
        cfg.grid
    except GridError as exc:
        raise ConfigError("grid", str(exc)) from None
    s, r, o, sc = cfg["solver"], cfg["run"], cfg["oracle"], cfg["scan"]
    checks = [
        ("solver.tol", s["tol"] > 0, "must be > 0"),
        ("solver.max_iter", s["max_iter"] >= 1, "must be >= 1"),
        ("solver.rate", s["rate"] >= 0, "must be >= 0"),
        ("solver.fp_tol", s["fp_tol"] > 0, "must be > 0"),
        ("solver.safety", 0 < s["safety"] <= 1, "must lie in (0, 1]"),
        ("solver.dt_max", s["dt_max"] > 0, "must be > 0"),
        ("solver.g_scheme", s["g_scheme"] in ("fitted", "split"), "must be 'fitted' or 'split'"),
        ("run.T", r["T"] > 0, "must be > 0"),
        ("run.sample_every", 0 < r["sample_every"] <= r["T"], "must lie in (0, T]"),
        ("run.K", r["K"] >= 2, "must be >= 2"),
        ("run.q", r["q"] >= 2, "must be >= 2"),
        ("run.ell", r["ell"] >= 0, "must be >= 0"),
        ("run.g_var", r["g_var"] is None or r["g_var"] > 0, "must be > 0"),
        ("run.snapshot_times", all(0 <= t <= r["T"] for t in r["snapshot_times"]), "must lie in [0, T]"),
        ("oracle.n", o["n"] >= 1, "must be >= 1"),
        ("oracle.T", o["T"] > 0, "must be > 0"),
        ("oracle.dt", 0 < o["dt"] <= o["T"], "must lie in (0, T]"),
        ("oracle.mode", o["mode"] in ("frozen", "mean-field"), "must be 'frozen' or 'mean-field'"),
        ("scan.xs", all(x >= 0 for x in sc["xs"]) and list(sc["xs"]) == sorted(sc["xs"]), "must be sorted and >= 0"),
        ("scan.x_max", sc["x_max"] > 0, "must be > 0"),
    ]
    for key, ok, msg in checks:
        if not ok:
            raise ConfigError(key, msg)


def _model_key(message: str) -> str:
    """First ModelParams field named in a validation message."""
    keys = list(SCHEMA["model"])
    for key in keys:
        if message.startswith(f"{key} "):
            return f"model.{key}"
    for key in keys:
        if f" {key} " in f" {message} ":
            return f"model.{key}"
    return "model"


def help_text() -> str:
    lines = ["configuration keys ([section] key = value; units in brackets):"]
    for section, keys in SCHEMA.items():
        lines.append(f"  [{section}]")
        for k, spec in keys.items():
            lines.append(f"    {k:<15} [{spec.unit}] {spec.help} (default {spec.default!r})")
    return "\n".join(lines)


def write_default(path) -> None:
    with open(path, "w") as fh:
        for section, keys in SCHEMA.items():
            fh.write(f"[{section}]\n")
            for k, spec in keys.items():
                v = spec.default
                if v is None:
                    fh.write(f"# {k} =  # [{spec.unit}] {spec.help}\n")
                    continue
                if isinstance(v, tuple):
                    v = ", ".join(map(str, v))
                fh.write(f"{k} = {v}  # [{spec.unit}] {spec.help}\n")
            fh.write("\n")
