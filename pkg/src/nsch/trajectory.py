"""Stored runs: uniformly spaced snapshots plus the per-step diagnostics.

On disk a trajectory is a directory::

    meta.json              grid, physics, eps, dt, snapshot stride
    diagnostics.csv        one row per step
    fields/s000123_rho.nschf, ..._c, ..._mu, ..._u0[, ..._u1]
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics
from .constitutive import PhysicalParams, make_profile
from .fieldio import read_field, write_field
from .grid import Grid
from .potential import PotentialParams
from .state import State


def params_to_dict(params: PhysicalParams) -> dict:
    return {"gamma": params.gamma, "theta": params.theta, "theta0": params.theta0,
            "eta": params.viscosity.eta_spec, "lambda": params.viscosity.lam_spec}


def params_from_dict(d: dict) -> PhysicalParams:
    return PhysicalParams(PotentialParams(d["theta"], d["theta0"], d["gamma"]),
                          make_profile(d["eta"], d["lambda"]))


@dataclass
class Trajectory:
    """Snapshots ``t_n = n * dt_snap`` with the full per-step diagnostics."""

    grid: Grid
    params: PhysicalParams
    eps: float
    dt: float
    stride: int
    M_r: float
    states: list = field(default_factory=list)
    records: list = field(default_factory=list)
    energy_scale: float = 0.0
    newton_abs_tol: float = 1e-10

    @property
    def dt_snap(self) -> float:
        return self.dt * self.stride

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])

    @property
    def T(self) -> float:
        return float(self.states[-1].time)

    def stack(self, name: str) -> np.ndarray:
        """Time-stacked cell field ``rho``, ``c`` or ``mu``."""
        return np.stack([getattr(s, name).values for s in self.states])

    def stack_u(self, k: int) -> np.ndarray:
        return np.stack([s.u.components[k] for s in self.states])

    def check_uniform(self, rtol: float = 1e-9) -> None:
        t = self.times
        if len(t) < 2:
            raise ValueError("trajectory needs at least 2 snapshots")
        d = np.diff(t)
        if np.max(np.abs(d - self.dt_snap)) > rtol * max(1.0, self.dt_snap) * len(t):
            raise ValueError("trajectory snapshots are not uniformly spaced in time")

    # ------------------------------------------------------------------
    def save(self, directory) -> Path:
        d = Path(directory)
        write_meta(d, self.grid, self.params, self.eps, self.dt, self.stride, self.M_r,
                   [int(s.step) for s in self.states], self.energy_scale, self.newton_abs_tol)
        for s in self.states:
            write_snapshot(d / "fields", s)
        if self.records:
            (d / "diagnostics.csv").write_text(diagnostics.records_to_csv(self.records), encoding="utf-8")
        return d

    @classmethod
    def load(cls, directory) -> "Trajectory":
        d = Path(directory)
        meta_path = d / "meta.json"
        if not meta_path.is_file():
            raise FileNotFoundError(f"{d} is not a trajectory directory (no meta.json)")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        grid = Grid(tuple(meta["cells"]), tuple(meta["lengths"]))
        params = params_from_dict(meta["physics"])
        states = [read_snapshot(d / "fields", grid, n, meta["dt"], meta["eps"]) for n in meta["snapshots"]]
        recs = diagnostics.read_csv(d / "diagnostics.csv") if (d / "diagnostics.csv").is_file() else []
        return cls(grid, params, meta["eps"], meta["dt"], meta["stride"], meta["M_r"], states, recs,
                   meta.get("energy_scale", 0.0), meta.get("newton_abs_tol", 1e-10))


def write_meta(directory, grid: Grid, params: PhysicalParams, eps: float, dt: float, stride: int,
               M_r: float, snapshots: list[int], energy_scale: float = 0.0,
               newton_abs_tol: float = 1e-10) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "cells": list(grid.cells), "lengths": list(grid.lengths),
        "physics": params_to_dict(params), "eps": eps, "dt": dt,
        "stride": stride, "M_r": M_r, "energy_scale": energy_scale,
        "newton_abs_tol": newton_abs_tol, "snapshots": list(snapshots),
    }
    path = d / "meta.json"
    path.write_text(json.dumps(meta, indent=1, sort_keys=True), encoding="utf-8")
    return path


def _stem(step: int) -> str:
    return f"s{step:06d}"


def write_snapshot(directory, state: State) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = state.grid
    stem = _stem(state.step)
    for name in ("rho", "c", "mu"):
        write_field(d / f"{stem}_{name}.nschf", getattr(state, name).values, g.spacing)
    for k, comp in enumerate(state.u.components):
        write_field(d / f"{stem}_u{k}.nschf", comp, g.spacing)


def read_snapshot(directory, grid: Grid, step: int, dt: float, eps: float) -> State:
    d = Path(directory)
    stem = _stem(step)
    rho = read_field(d / f"{stem}_rho.nschf", grid)
    c = read_field(d / f"{stem}_c.nschf", grid)
    mu = read_field(d / f"{stem}_mu.nschf", grid)
    u = tuple(read_field(d / f"{stem}_u{k}.nschf", grid, axis=k) for k in range(grid.dim))
    return State.from_arrays(grid, rho, u, c, mu, step * dt, eps, step)
