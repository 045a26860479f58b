"""Per-step monitors: conserved masses, energy, dissipation and estimate integrals.

Every integral is the midpoint rule on cells, or on faces for face-located
quantities. The dissipation terms are evaluated with the same discrete forms
as the stepper, so the energy audit is an identity of the scheme rather than
a quadrature comparison.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.integrate import trapezoid

from .constitutive import PhysicalParams, energy_density, pressure, viscous_dissipation
from .grid import Grid
from .potential import RegularizedPotential


@dataclass(frozen=True)
class DiagnosticsRecord:
    step: int
    time: float
    M: float
    M_c: float
    E_eps: float
    visc_dissipation: float
    mu_dissipation: float
    ne1: float
    ne1_abs: float
    mu_h1: float
    rho_fprime_sq: float
    phase_defect: float
    pressure_norm: float
    cmin: float
    cmax: float
    rhomin: float
    rhomax: float
    gradc_l2p4: float = 0.0
    energy_defect: float = 0.0
    energy_tol: float = 0.0
    energy_ok: int = 1
    newton_iters: int = 0
    newton_residual: float = 0.0
    linear_iters_phase: int = 0
    linear_iters_visc: int = 0


# units of each column in nondimensional model units
UNITS = {
    "step": "-", "time": "t", "M": "rho*L^d", "M_c": "rho*L^d", "E_eps": "E",
    "visc_dissipation": "E/t", "mu_dissipation": "E/t", "ne1": "E", "ne1_abs": "E",
    "mu_h1": "mu*L^(d/2)", "rho_fprime_sq": "E^2/(rho*L^d)", "phase_defect": "rho*L^d",
    "pressure_norm": "p*L^(d/q)", "cmin": "-", "cmax": "-", "rhomin": "rho", "rhomax": "rho",
    "gradc_l2p4": "L^(d/(2p4)-1)", "energy_defect": "E", "energy_tol": "E", "energy_ok": "bool",
    "newton_iters": "count", "newton_residual": "-", "linear_iters_phase": "count",
    "linear_iters_visc": "count",
}

COLUMNS = tuple(f.name for f in fields(DiagnosticsRecord))


def q_gamma(gamma: float) -> float:
    """Pressure integrability exponent min(5/3 - 1/gamma, 3/2)."""
    return min(5.0 / 3.0 - 1.0 / gamma, 1.5)


def p4_gamma(gamma: float) -> float:
    return 3.0 * gamma / (gamma + 3.0)


def total_energy(grid: Grid, rho, u, c, reg: RegularizedPotential, gamma: float) -> float:
    return grid.integrate(energy_density(grid, rho, u, c, gamma, reg.theta0, reg))


def mu_dissipation(grid: Grid, mu: np.ndarray) -> float:
    return float(sum(np.sum(g * g) for g in grid.grad(mu)) * grid.cell_volume)


def record(state, params: PhysicalParams, M_r: float, reg: RegularizedPotential | None = None,
           **extra) -> DiagnosticsRecord:
    """Diagnostics of one state; ``extra`` fills the audit and solver columns."""
    g = state.grid
    rho = state.rho.values
    c = state.c.values
    mu = state.mu.values
    u = state.u.components
    if reg is None:
        reg = RegularizedPotential(params.potential, state.eps)
    vol = g.cell_volume
    fp = reg.prime(c)
    grads_mu = g.grad(mu)
    gmu2 = float(sum(np.sum(x * x) for x in grads_mu) * vol)
    visc = viscous_dissipation(g, u, params.viscosity.eta(c), params.viscosity.lam(c))
    q = q_gamma(params.gamma)
    p = pressure(rho, params.gamma)
    p4 = p4_gamma(params.gamma)
    gc2 = np.zeros(g.cells)
    for k, gk in enumerate(g.grad(c)):
        gc2 += g.cell_average(gk * gk, k)
    return DiagnosticsRecord(
        step=int(state.step),
        time=float(state.time),
        M=g.integrate(rho),
        M_c=g.integrate(rho * c),
        E_eps=total_energy(g, rho, u, c, reg, params.gamma),
        visc_dissipation=visc,
        mu_dissipation=gmu2,
        ne1=g.integrate(rho * fp * (c - M_r)),
        ne1_abs=g.integrate(rho * np.abs(fp)),
        mu_h1=float(np.sqrt(g.integrate(mu * mu) + gmu2)),
        rho_fprime_sq=g.integrate(rho * fp * fp),
        phase_defect=g.integrate(rho * np.maximum(np.abs(c) - 1.0, 0.0) ** 2),
        pressure_norm=float(g.integrate(p ** q) ** (1.0 / q)),
        cmin=float(np.min(c)),
        cmax=float(np.max(c)),
        rhomin=float(np.min(rho)),
        rhomax=float(np.max(rho)),
        gradc_l2p4=float(g.integrate(gc2 ** p4) ** (1.0 / (2.0 * p4))),
        **extra,
    )


def ne1_scale(rec: DiagnosticsRecord) -> float:
    """Natural magnitude of ne1 used for the sign-property tolerance."""
    return max(rec.ne1_abs, 1e-300)


# ----------------------------------------------------------------------
# time series

def _trapz(y: np.ndarray, t: np.ndarray) -> float:
    return float(trapezoid(y, t))


def timeseries_norms(records, T: float | None = None) -> dict:
    """L2-in-time norms of the estimate quantities by the trapezoid rule.

    Returns ne1_L2, ne1_abs_L2, mu_L2H1, sqrt_rho_fprime_L2L2 plus the phase
    defect time-max and time-integral.
    """
    recs = list(records)
    if len(recs) < 2:
        raise ValueError("timeseries_norms needs at least 2 records")
    t = np.array([r.time for r in recs])
    if T is not None:
        keep = t <= T + 1e-12 * max(1.0, T)
        recs = [r for r, k in zip(recs, keep) if k]
        t = t[keep]
        if len(recs) < 2:
            raise ValueError("timeseries_norms needs at least 2 records in [0, T]")
    col = lambda name: np.array([getattr(r, name) for r in recs])
    defect = col("phase_defect")
    return {
        "ne1_L2": np.sqrt(_trapz(col("ne1") ** 2, t)),
        "ne1_abs_L2": np.sqrt(_trapz(col("ne1_abs") ** 2, t)),
        "mu_L2H1": np.sqrt(_trapz(col("mu_h1") ** 2, t)),
        "sqrt_rho_fprime_L2L2": np.sqrt(_trapz(col("rho_fprime_sq"), t)),
        "defect_max": float(np.max(defect)),
        "defect_int": _trapz(defect, t),
    }


# ----------------------------------------------------------------------
# CSV

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def csv_header() -> list[str]:
    return [f"{name} [{UNITS[name]}]" for name in COLUMNS]


def csv_row(rec: DiagnosticsRecord) -> list[str]:
    return [_fmt(getattr(rec, name)) for name in COLUMNS]


class CsvWriter:
    """Streams records to a CSV file with a fixed column order."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(csv_header())

    def write(self, rec: DiagnosticsRecord):
        self._w.writerow(csv_row(rec))

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header())
    for r in records:
        w.writerow(csv_row(r))
    return buf.getvalue()


def read_csv(path) -> list[DiagnosticsRecord]:
    out = []
    types = {f.name: f.type for f in fields(DiagnosticsRecord)}
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        names = [h.split(" [")[0] for h in header]
        for row in rows:
            kw = {}
            for n, v in zip(names, row):
                kw[n] = int(v) if types[n] in ("int", int) else float(v)
            out.append(DiagnosticsRecord(**kw))
    return out


def as_dict(rec: DiagnosticsRecord) -> dict:
    return asdict(rec)
