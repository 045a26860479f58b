"""Line-oriented run configuration: ``section.key = value``.

Blank lines and ``#`` comments are ignored. Every key is declared in
``KEYS`` with its type, default and documentation; unknown keys are errors.
Parsing collects every problem before reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

from .constitutive import PhysicalParams, make_profile, parse_profile
from .grid import Grid
from .linsolve import NewtonConfig
from .potential import PotentialParams
from .state import COND_GAMMA, COND_THERMO, PRESETS, InitialData, preset
from .stepper import FORCE_FORMS, StepConfig, cfl_number


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(s: str) -> int:
    return int(s)


def _bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _floats(s: str) -> tuple[float, ...]:
    return tuple(_float(x) for x in s.split(",") if x.strip())


def _str(s: str) -> str:
    return s.strip()


def _dt(s: str):
    return "auto" if s.strip().lower() == "auto" else _float(s)


@dataclass(frozen=True)
class Key:
    name: str
    parse: Callable[[str], Any]
    default: Any
    doc: str
    type_name: str


_N = None  # marks a required key

KEYS: tuple[Key, ...] = (
    Key("grid.dim", _int, _N, "spatial dimension, 1 or 2", "int"),
    Key("grid.cells", _ints, _N, "cells per axis, comma separated", "ints"),
    Key("grid.lengths", _floats, _N, "domain side lengths, comma separated", "floats"),
    Key("physics.gamma", _float, 2.0, "adiabatic exponent; must satisfy gamma > 3/2", "float"),
    Key("physics.theta", _float, 1.0, "entropy temperature; needs 0 < theta < theta0", "float"),
    Key("physics.theta0", _float, 2.0, "critical temperature of the concave part", "float"),
    Key("physics.eta", _str, "rational:0.5,1.0", "shear viscosity eta(c): constant:a or rational:lo,hi", "spec"),
    Key("physics.lambda", _str, "constant:0", "bulk viscosity lambda(c), nonnegative", "spec"),
    Key("potential.eps", _float, 0.01, "regularization parameter in (0, 1/2)", "float"),
    Key("potential.schedule", _floats, (), "eps sweep schedule, strictly decreasing; empty = default", "floats"),
    Key("initial.preset", _str, "uniform", f"initial data: one of {', '.join(PRESETS)}", "name"),
    Key("initial.rho", _float, 1.0, "background density", "float"),
    Key("initial.c", _float, 0.0, "uniform preset: concentration", "float"),
    Key("initial.mean", _float, 0.1, "spinodal/shear: mean concentration", "float"),
    Key("initial.amplitude", _float, 1e-3, "spinodal: noise amplitude; shear: vortex speed", "float"),
    Key("initial.seed", _int, 0, "seed of the initial perturbation generator", "int"),
    Key("initial.radius", _float, 0.0, "bubble: radius (0 = quarter of the shortest side)", "float"),
    Key("initial.width", _float, 1.0, "bubble/shear: interface width", "float"),
    Key("initial.c_in", _float, 0.8, "bubble: concentration inside", "float"),
    Key("initial.c_out", _float, -0.8, "bubble: concentration outside", "float"),
    Key("initial.c_amp", _float, 0.8, "shear/advection: concentration amplitude", "float"),
    Key("initial.rho_amp", _float, 0.2, "advection: relative density amplitude", "float"),
    Key("initial.velocity", _float, 0.5, "advection: peak velocity", "float"),
    Key("initial.rho_file", _str, "", "file preset: density field file", "path"),
    Key("initial.c_file", _str, "", "file preset: concentration field file", "path"),
    Key("initial.u_files", _str, "", "file preset: velocity face-field files, one per axis", "paths"),
    Key("time.T", _float, _N, "final time, > 0", "float"),
    Key("time.dt", _dt, 0.05, "time step, or auto to pick it from time.cfl", "float|auto"),
    Key("time.cfl", _float, 0.25, "target CFL number when time.dt = auto", "float"),
    Key("time.dt_max", _float, 0.05, "upper bound on the automatic time step", "float"),
    Key("time.cfl_safety", _float, 0.5, "abort threshold for the CFL number, in (0, 1]", "float"),
    Key("solver.newton_abs_tol", _float, 1e-10, "Newton absolute tolerance (max norm)", "float"),
    Key("solver.newton_rel_tol", _float, 1e-9, "Newton relative tolerance", "float"),
    Key("solver.newton_max_iter", _int, 50, "Newton iteration cap", "int"),
    Key("solver.linear_tol", _float, 1e-12, "BiCGStab relative tolerance", "float"),
    Key("solver.linear_max_iter", _int, 5000, "BiCGStab iteration cap", "int"),
    Key("solver.delta_reg", _float, 1e-10, "vacuum lift of rho in the chemical-potential equation", "float"),
    Key("solver.force_form", _str, "energy", f"force discretization: {' or '.join(FORCE_FORMS)}", "name"),
    Key("solver.energy_tol_factor", _float, 1.0, "constant C in the energy tolerance C dt^2 K", "float"),
    Key("solver.frozen_velocity", _bool, False, "freeze rho and u (pure Cahn-Hilliard sub-flow)", "bool"),
    Key("output.directory", _str, "out", "output directory", "path"),
    Key("output.snapshot_every", _int, 0, "write field snapshots every k steps (0 = none)", "int"),
    Key("output.strict_energy", _bool, True, "abort on an energy-inequality violation", "bool"),
    Key("output.plots", _bool, True, "render figures next to the CSV files", "bool"),
    Key("sweep.keep_every", _int, 10, "sweep: snapshot stride used for c differences", "int"),
)

KEY_INDEX = {k.name: k for k in KEYS}
_PRESET_KEYS = {
    "uniform": ("rho", "c"),
    "spinodal": ("rho", "mean", "amplitude", "seed"),
    "bubble": ("rho", "radius", "width", "c_in", "c_out"),
    "shear": ("rho", "amplitude", "mean", "c_amp", "width"),
    "advection": ("rho", "rho_amp", "velocity", "c_amp"),
    "file": ("rho_file", "c_file", "u_files"),
}


def help_config() -> str:
    """Reference of every configuration key."""
    lines = ["Configuration keys (section.key = value; '#' starts a comment):", ""]
    section = None
    for k in KEYS:
        sec = k.name.split(".")[0]
        if sec != section:
            lines.append(f"[{sec}]")
            section = sec
        default = "required" if k.default is None else f"default {_show(k.default)}"
        lines.append(f"  {k.name:<26} {k.type_name:<10} {default:<28} {k.doc}")
    return "\n".join(lines)


def _show(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v) or "(empty)"
    if isinstance(v, str):
        return v or "(empty)"
    return str(v).lower() if isinstance(v, bool) else str(v)


@dataclass
class RunConfig:
    values: dict
    text: str = ""

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def grid(self) -> Grid:
        return Grid(tuple(self["grid.cells"]), tuple(self["grid.lengths"]))

    @property
    def params(self) -> PhysicalParams:
        pp = PotentialParams(self["physics.theta"], self["physics.theta0"], self["physics.gamma"])
        return PhysicalParams(pp, make_profile(self["physics.eta"], self["physics.lambda"]))

    @property
    def preset_params(self) -> dict:
        name = self["initial.preset"]
        out = {k: self[f"initial.{k}"] for k in _PRESET_KEYS[name]}
        if name == "bubble" and out["radius"] == 0.0:
            del out["radius"]
        return out

    def initial_data(self) -> InitialData:
        return preset(self["initial.preset"], self.grid, **self.preset_params)

    def newton(self) -> NewtonConfig:
        return NewtonConfig(abs_tol=self["solver.newton_abs_tol"], rel_tol=self["solver.newton_rel_tol"],
                            max_iter=self["solver.newton_max_iter"])

    def time_step(self, u0=None) -> tuple[float, int]:
        """(dt, n_steps) with n_steps dt = T exactly."""
        T = self["time.T"]
        dt = self["time.dt"]
        if dt == "auto":
            rate = 0.0 if u0 is None else cfl_number(self.grid, u0)
            dt = self["time.dt_max"] if rate == 0 else min(self["time.dt_max"], self["time.cfl"] / rate)
        n = max(1, int(math.ceil(T / dt - 1e-9)))
        return T / n, n

    def step_config(self, dt: float, strict: bool | None = None) -> StepConfig:
        return StepConfig(dt=dt, cfl_safety=self["time.cfl_safety"], delta_reg=self["solver.delta_reg"],
                          newton=self.newton(), force_form=self["solver.force_form"],
                          strict=self["output.strict_energy"] if strict is None else strict,
                          frozen_velocity=self["solver.frozen_velocity"],
                          energy_tol_factor=self["solver.energy_tol_factor"],
                          linear_tol=self["solver.linear_tol"], linear_max_iter=self["solver.linear_max_iter"])

    def with_overrides(self, **updates) -> "RunConfig":
        vals = dict(self.values)
        vals.update(updates)
        return RunConfig(vals, self.text)

    def render(self) -> str:
        """Canonical text form that parses back to the same values."""
        out = []
        for k in KEYS:
            v = self.values[k.name]
            out.append(f"{k.name} = {_render(v)}")
        return "\n".join(out) + "\n"


def _render(v) -> str:
    if isinstance(v, tuple):
        return ",".join(repr(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str, overrides: list[str] | None = None) -> RunConfig:
    """Parse and validate; raises ConfigError listing every problem."""
    errors: list[str] = []
    raw: dict[str, tuple[int, str]] = {}
    lines = text.splitlines() + list(overrides or [])
    for lineno, line in enumerate(lines, 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"line {lineno}" if lineno <= len(text.splitlines()) else f"override {body!r}"
        key, sep, value = body.partition("=")
        key = key.strip()
        if not sep:
            errors.append(f"{where}: expected 'section.key = value'")
            continue
        if key not in KEY_INDEX:
            errors.append(f"{where}: unknown key {key!r}")
            continue
        raw[key] = (lineno, value.strip())

    values: dict[str, Any] = {}
    for k in KEYS:
        if k.name in raw:
            lineno, s = raw[k.name]
            try:
                values[k.name] = k.parse(s)
            except ValueError as exc:
                errors.append(f"{k.name}: cannot parse {s!r} as {k.type_name} ({exc})")
        elif k.default is None:
            errors.append(f"{k.name}: required key missing")
        else:
            values[k.name] = k.default

    errors.extend(_validate(values))
    if errors:
        raise ConfigError(errors)
    return RunConfig(values, text)


def _validate(v: dict) -> list[str]:
    e = []

    def have(*names):
        return all(n in v for n in names)

    if have("grid.dim"):
        if v["grid.dim"] not in (1, 2):
            e.append("grid.dim: must be 1 or 2")
        else:
            for name in ("grid.cells", "grid.lengths"):
                if name in v and len(v[name]) != v["grid.dim"]:
                    e.append(f"{name}: needs {v['grid.dim']} entries, got {len(v[name])}")
    if "grid.cells" in v and any(n < 2 for n in v["grid.cells"]):
        e.append("grid.cells: every axis needs at least 2 cells")
    if "grid.lengths" in v and any(not (L > 0) for L in v["grid.lengths"]):
        e.append("grid.lengths: must be positive")
    if have("physics.gamma") and not v["physics.gamma"] > 1.5:
        e.append(f"physics.gamma = {v['physics.gamma']}: violates {COND_GAMMA}")
    if have("physics.theta", "physics.theta0") and not (0 < v["physics.theta"] < v["physics.theta0"]):
        e.append(f"physics.theta = {v['physics.theta']}, physics.theta0 = {v['physics.theta0']}: "
                 f"violates the thermodynamic condition {COND_THERMO}")
    for name, zero in (("physics.eta", False), ("physics.lambda", True)):
        if name in v:
            try:
                parse_profile(v[name], allow_zero=zero)
            except ValueError as exc:
                e.append(f"{name}: {exc}")
    if have("potential.eps") and not (0 < v["potential.eps"] < 0.5):
        e.append(f"potential.eps = {v['potential.eps']}: must lie in (0, 1/2)")
    if have("potential.schedule"):
        s = v["potential.schedule"]
        if any(not (0 < x < 0.5) for x in s):
            e.append("potential.schedule: every eps must lie in (0, 1/2)")
        if any(b >= a for a, b in zip(s[:-1], s[1:])):
            e.append("potential.schedule: must be strictly decreasing")
    if have("initial.preset"):
        p = v["initial.preset"]
        if p not in _PRESET_KEYS:
            e.append(f"initial.preset: unknown preset {p!r} (choose from {', '.join(_PRESET_KEYS)})")
        elif p == "file" and not (v.get("initial.rho_file") and v.get("initial.c_file")):
            e.append("initial.preset = file: initial.rho_file and initial.c_file are required")
        elif p == "shear" and v.get("grid.dim") != 2:
            e.append("initial.preset = shear: needs grid.dim = 2")
    if have("time.T") and not v["time.T"] > 0:
        e.append("time.T: must be positive")
    if have("time.dt") and v["time.dt"] != "auto" and not v["time.dt"] > 0:
        e.append("time.dt: must be positive or auto")
    for name in ("time.cfl", "time.dt_max", "solver.newton_abs_tol", "solver.newton_rel_tol",
                 "solver.linear_tol", "solver.delta_reg"):
        if name in v and not v[name] > 0:
            e.append(f"{name}: must be positive")
    if have("time.cfl_safety") and not (0 < v["time.cfl_safety"] <= 1):
        e.append("time.cfl_safety: must lie in (0, 1]")
    for name in ("solver.newton_max_iter", "solver.linear_max_iter", "sweep.keep_every"):
        if name in v and v[name] < 1:
            e.append(f"{name}: must be at least 1")
    if have("solver.force_form") and v["solver.force_form"] not in FORCE_FORMS:
        e.append(f"solver.force_form: must be one of {', '.join(FORCE_FORMS)}")
    if have("solver.energy_tol_factor") and not v["solver.energy_tol_factor"] >= 0:
        e.append("solver.energy_tol_factor: must be nonnegative")
    if have("output.snapshot_every") and v["output.snapshot_every"] < 0:
        e.append("output.snapshot_every: must be nonnegative")
    return e


def load_config(path, overrides: list[str] | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, overrides)
