"""Simulation state, initial-data presets and the admissibility validator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constitutive import energy_density
from .grid import DIRICHLET_ZERO, Grid, NEUMANN_ZERO, NO_BC, ScalarField, VectorField
from .potential import PotentialParams, RegularizedPotential


@dataclass(frozen=True)
class State:
    """(rho, u, c, mu) at one time level.

    Velocity is stored on faces; the momentum ``m = rho_f u`` uses the face
    density rho_f, the average of the two adjacent cells.
    """

    rho: ScalarField
    u: VectorField
    c: ScalarField
    mu: ScalarField
    time: float
    eps: float
    step: int = 0

    def __post_init__(self):
        g = self.rho.grid
        for f in (self.u, self.c, self.mu):
            if f.grid != g:
                raise ValueError("all state fields must share one grid")
        if np.any(self.rho.values < 0):
            raise ValueError("density must be nonnegative")
        if not (self.time >= 0):
            raise ValueError("time must be nonnegative")

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    @property
    def momentum(self) -> VectorField:
        g = self.grid
        comps = tuple(g.face_average(self.rho.values, k) * self.u.components[k] for k in range(g.dim))
        return VectorField(g, comps)

    @classmethod
    def from_arrays(cls, grid: Grid, rho, u, c, mu, time: float, eps: float, step: int = 0) -> "State":
        return cls(ScalarField(grid, rho, NO_BC), VectorField(grid, tuple(u), DIRICHLET_ZERO),
                   ScalarField(grid, c, NEUMANN_ZERO), ScalarField(grid, mu, NEUMANN_ZERO),
                   float(time), float(eps), int(step))


# ----------------------------------------------------------------------
# initial data

@dataclass
class InitialData:
    """Raw initial data on a grid: rho0 and c0 at cells, m0 on faces."""

    grid: Grid
    rho0: np.ndarray
    c0: np.ndarray
    m0: tuple[np.ndarray, ...]

    @classmethod
    def from_velocity(cls, grid: Grid, rho0, c0, u0=None) -> "InitialData":
        rho0 = np.asarray(rho0, dtype=float).reshape(grid.cells)
        if u0 is None:
            u0 = tuple(np.zeros(grid.face_shape(k)) for k in range(grid.dim))
        m0 = tuple(grid.face_average(rho0, k) * np.asarray(u0[k], dtype=float)
                   for k in range(grid.dim))
        return cls(grid, rho0, np.asarray(c0, dtype=float).reshape(grid.cells), m0)


@dataclass(frozen=True)
class Violation:
    condition: str
    message: str

    def __str__(self):
        return f"[{self.condition}] {self.message}"


class InadmissibleDataError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class AdmissibleInitialData:
    grid: Grid
    rho0: np.ndarray
    c0: np.ndarray
    m0: tuple[np.ndarray, ...]
    u0: tuple[np.ndarray, ...]
    M: float
    M_c: float
    M_r: float
    E0: float
    params: PotentialParams

    def energy_eps(self, eps: float) -> float:
        reg = RegularizedPotential(self.params, eps)
        dens = energy_density(self.grid, self.rho0, self.u0, self.c0, self.params.gamma,
                              self.params.theta0, reg)
        return self.grid.integrate(dens)


# named conditions used in violation reports
COND_GAMMA = "gamma > 3/2"
COND_THERMO = "0 < theta < theta0"
COND_I1 = "I1: rho0 >= 0, |c0| <= 1"
COND_I2 = "I2: finite initial energy"
COND_K = "constant K: M > 0, M_r = M_c/M in (-1, 1)"
COND_SHAPE = "fields on a common grid"


def check_initial_data(data: InitialData, params: PotentialParams | dict) -> tuple[list[Violation], dict]:
    """Collect every hypothesis violation; returns (violations, derived quantities)."""
    out: list[Violation] = []
    if isinstance(params, dict):
        gamma, theta, theta0 = params["gamma"], params["theta"], params["theta0"]
    else:
        gamma, theta, theta0 = params.gamma, params.theta, params.theta0
    if not gamma > 1.5:
        out.append(Violation(COND_GAMMA, f"adiabatic exponent gamma={gamma} must exceed 3/2"))
    if not (0 < theta < theta0):
        out.append(Violation(COND_THERMO, f"theta={theta}, theta0={theta0} violate 0 < theta < theta0"))

    g = data.grid
    rho0 = np.asarray(data.rho0, dtype=float)
    c0 = np.asarray(data.c0, dtype=float)
    derived: dict = {}
    if rho0.shape != g.cells or c0.shape != g.cells or len(data.m0) != g.dim or any(
            np.shape(data.m0[k]) != g.face_shape(k) for k in range(g.dim)):
        out.append(Violation(COND_SHAPE, "rho0, c0 and m0 must match the grid"))
        return out, derived
    if not (np.all(np.isfinite(rho0)) and np.all(np.isfinite(c0))):
        out.append(Violation(COND_I1, "initial fields must be finite"))
        return out, derived
    if np.any(rho0 < 0):
        idx = tuple(int(i) for i in np.argwhere(rho0 < 0)[0])
        out.append(Violation(COND_I1, f"negative density {rho0[idx]:.3e} at cell {idx}"))
    if np.any(np.abs(c0) > 1):
        idx = tuple(int(i) for i in np.argwhere(np.abs(c0) > 1)[0])
        out.append(Violation(COND_I1, f"|c0| = {abs(c0[idx]):.6g} > 1 at cell {idx}"))

    M = g.integrate(rho0)
    M_c = g.integrate(rho0 * c0)
    derived.update(M=M, M_c=M_c)
    if not M > 0:
        out.append(Violation(COND_K, f"total mass M = {M:.6g} must be positive"))
    else:
        M_r = M_c / M
        derived["M_r"] = M_r
        if not abs(M_r) < 1:
            out.append(Violation(COND_K, f"M_r = {M_r:.12g} must lie strictly inside (-1, 1); "
                                         "a single pure phase is not admissible"))

    # kinetic part of the energy: |m|^2 / rho_f with 0/0 := 0
    u0 = []
    kinetic_ok = True
    for k in range(g.dim):
        m = np.asarray(data.m0[k], dtype=float)
        rf = g.face_average(np.maximum(rho0, 0.0), k)
        boundary = ~g.interior_face_mask(k)
        if np.any(m[boundary] != 0):
            out.append(Violation(COND_I2, f"momentum component {k} must vanish on the boundary"))
            kinetic_ok = False
        vac = (rf == 0) & (m != 0)
        if np.any(vac):
            idx = tuple(int(i) for i in np.argwhere(vac)[0])
            out.append(Violation(COND_I2, f"momentum {m[idx]:.3e} on vacuum face {idx} "
                                          f"(axis {k}) gives infinite kinetic energy"))
            kinetic_ok = False
        with np.errstate(divide="ignore", invalid="ignore"):
            u0.append(np.where(rf > 0, m / np.where(rf > 0, rf, 1.0), 0.0))
    derived["u0"] = tuple(u0)

    if kinetic_ok and not any(v.condition == COND_I1 for v in out) and gamma > 1.0:
        dens = energy_density(g, np.maximum(rho0, 0.0), u0, c0, gamma, theta0, theta)
        E0 = g.integrate(dens)
        derived["E0"] = E0
        if not np.isfinite(E0):
            out.append(Violation(COND_I2, f"initial energy is not finite (E0 = {E0})"))
    else:
        derived["E0"] = np.inf
    return out, derived


def validate_initial_data(data: InitialData, params: PotentialParams | dict) -> AdmissibleInitialData:
    """Return the admissible data with M, M_c, M_r and E0, or raise with all violations."""
    violations, d = check_initial_data(data, params)
    if violations:
        raise InadmissibleDataError(violations)
    if isinstance(params, dict):
        params = PotentialParams(params["theta"], params["theta0"], params["gamma"])
    return AdmissibleInitialData(data.grid, np.array(data.rho0, dtype=float), np.array(data.c0, dtype=float),
                                 tuple(np.array(m, dtype=float) for m in data.m0), d["u0"],
                                 d["M"], d["M_c"], d["M_r"], d["E0"], params)


def initial_mu(grid: Grid, rho, c, reg: RegularizedPotential, delta_reg: float,
               c_explicit=None) -> np.ndarray:
    """Discrete chemical potential from max(rho, delta) mu = -lap c + rho G(c)."""
    c_old = c if c_explicit is None else c_explicit
    rhs = -grid.lap(c) + rho * (reg.prime(c) - reg.theta0 * c_old)
    return rhs / np.maximum(rho, delta_reg)


def build_initial_state(data: AdmissibleInitialData, eps: float, delta_reg: float = 1e-10) -> State:
    """State at t = 0 with mu from the discrete chemical-potential relation."""
    reg = RegularizedPotential(data.params, eps)
    g = data.grid
    mu = initial_mu(g, data.rho0, data.c0, reg, delta_reg)
    if not np.all(np.isfinite(mu)):
        raise RuntimeError("initial chemical potential is not finite")
    return State.from_arrays(g, data.rho0, data.u0, data.c0, mu, 0.0, eps)


def vacuum_cells(state: State, delta_reg: float) -> np.ndarray:
    return state.rho.values <= delta_reg


# ----------------------------------------------------------------------
# presets

def _noise(grid: Grid, seed: int, amplitude: float) -> np.ndarray:
    rng = np.random.default_rng(seed)
    z = rng.uniform(-1.0, 1.0, size=grid.cells)
    return amplitude * (z - z.mean())


def _stream_velocity(grid: Grid, psi_nodes: np.ndarray):
    """Discretely divergence-free face velocity from a nodal stream function."""
    hx, hy = grid.spacing
    ux = np.diff(psi_nodes, axis=1) / hy
    uy = -np.diff(psi_nodes, axis=0) / hx
    # psi vanishes on the walls only up to rounding of sin(pi)
    ux[[0, -1], :] = 0.0
    uy[:, [0, -1]] = 0.0
    return ux, uy


def preset(name: str, grid: Grid, **p) -> InitialData:
    """Build raw initial data for a named scenario.

    uniform:   rho, c (constants)
    spinodal:  rho, mean (=M_r), amplitude, seed
    bubble:    rho, c_in, c_out, radius, width (centre of the box)
    shear:     rho, amplitude, mean, c_amp, width  (2D vortex over a tanh layer)
    advection: rho, rho_amp, velocity, c_amp  (smooth 1D profiles)
    file:      rho_file, c_file, optional u_files (one face field per axis)
    """
    x = grid.cell_centers()
    L = grid.lengths
    rho = float(p.get("rho", 1.0))
    if name == "uniform":
        return InitialData.from_velocity(grid, np.full(grid.cells, rho), np.full(grid.cells, float(p.get("c", 0.0))))
    if name == "spinodal":
        c0 = float(p.get("mean", 0.0)) + _noise(grid, int(p.get("seed", 0)), float(p.get("amplitude", 1e-3)))
        return InitialData.from_velocity(grid, np.full(grid.cells, rho), c0)
    if name == "bubble":
        r = np.sqrt(sum((xi - Li / 2) ** 2 for xi, Li in zip(x, L)))
        R = float(p.get("radius", 0.25 * min(L)))
        w = float(p.get("width", 1.0))
        cin, cout = float(p.get("c_in", 0.8)), float(p.get("c_out", -0.8))
        c0 = cout + 0.5 * (cin - cout) * (1.0 - np.tanh((r - R) / w))
        return InitialData.from_velocity(grid, np.full(grid.cells, rho), c0)
    if name == "shear":
        if grid.dim != 2:
            raise ValueError("shear preset needs a 2D grid")
        U = float(p.get("amplitude", 0.5))
        w = float(p.get("width", 2.0))
        ca = float(p.get("c_amp", 0.8))
        nx, ny = grid.cells
        xn = np.arange(nx + 1) * grid.spacing[0]
        yn = np.arange(ny + 1) * grid.spacing[1]
        X, Y = np.meshgrid(xn, yn, indexing="ij")
        # stream function vanishing with its gradient on the walls
        psi = U * L[0] / np.pi * (np.sin(np.pi * X / L[0]) ** 2) * (np.sin(np.pi * Y / L[1]) ** 2)
        u0 = _stream_velocity(grid, psi)
        c0 = float(p.get("mean", 0.1)) + ca * np.tanh((x[1] - 0.5 * L[1]) / w)
        return InitialData.from_velocity(grid, np.full(grid.cells, rho), c0, u0)
    if name == "advection":
        a = float(p.get("rho_amp", 0.2))
        U = float(p.get("velocity", 0.5))
        ca = float(p.get("c_amp", 0.3))
        xs = x[0]
        rho0 = rho * (1.0 + a * np.cos(np.pi * xs / L[0]))
        c0 = ca * np.cos(np.pi * xs / L[0]) + 0.1
        xf = grid.face_centers(0)
        prof = np.sin(np.pi * xf[0] / L[0]) ** 2
        u0 = [U * prof] + [np.zeros(grid.face_shape(k)) for k in range(1, grid.dim)]
        u0[0][~grid.interior_face_mask(0)] = 0.0
        return InitialData.from_velocity(grid, rho0, c0, tuple(u0))
    if name == "file":
        from .fieldio import read_field
        rho0 = read_field(p["rho_file"], grid)
        c0 = read_field(p["c_file"], grid)
        u_files = p.get("u_files") or ()
        if isinstance(u_files, str):
            u_files = [f.strip() for f in u_files.split(",") if f.strip()]
        u0 = None
        if u_files:
            if len(u_files) != grid.dim:
                raise ValueError(f"need {grid.dim} velocity files, got {len(u_files)}")
            u0 = tuple(read_field(f, grid, axis=k) for k, f in enumerate(u_files))
        return InitialData.from_velocity(grid, rho0, c0, u0)
    raise ValueError(f"unknown initial-data preset {name!r}")


PRESETS = ("uniform", "spinodal", "bubble", "shear", "advection", "file")
