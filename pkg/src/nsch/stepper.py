"""Semi-implicit, energy-stable time step of the full system.

One step runs three sub-steps in a fixed order:

1. continuity: explicit donor-cell update with mass flux F = rho_up u^n;
2. phase: implicit (c, mu) solve by Newton, F_eps implicit and the concave
   -theta0 c term explicit (convex splitting), transported with the same F;
3. momentum: explicit upwind convection on dual cells, explicit pressure and
   capillary forces, implicit viscous operator.

With ``force_form = "energy"`` the forces are written as

    pressure:   -rho_up grad(h(rho^{n+1})),    h(r) = gamma r^(gamma-1)/(gamma-1)
    capillary:   rho_up (avg(mu^{n+1}) grad c^n - grad f_mix(c^n))

which equal -grad p and -div(grad c (x) grad c - |grad c|^2/2 I) for smooth
fields. Together with the centred face value of c in the phase flux they make
the work done by the forces cancel the transport terms of the potential
energies exactly, except for the lag between u^n (transport) and u^{n+1}
(work). The per-step energy defect is therefore bounded by
dt^2 * sum(vol |f|^2 / rho_f). ``force_form = "conservative"`` uses the
literal grad p and div K with upwind c fluxes instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import fft

from . import diagnostics
from .constitutive import PhysicalParams, ViscousOperator, korteweg_stress, node_average, pressure
from .diagnostics import DiagnosticsRecord
from .grid import Grid
from .linsolve import NewtonConfig, NonConvergenceError, SolveStats, bicgstab, newton_solve
from .potential import RegularizedPotential, enthalpy
from .state import State


class CflError(RuntimeError):
    def __init__(self, cfl: float, limit: float, dt: float):
        self.cfl = cfl
        self.suggested_dt = 0.95 * dt * limit / cfl
        super().__init__(f"CFL number {cfl:.4g} exceeds {limit:.4g}; "
                         f"reduce dt to at most {self.suggested_dt:.4g}")


class EnergyViolationError(RuntimeError):
    def __init__(self, step: int, defect: float, tol: float):
        self.step = step
        self.defect = defect
        self.tol = tol
        super().__init__(f"discrete energy inequality violated at step {step}: "
                         f"defect {defect:.4e} > tolerance {tol:.4e}")


FORCE_FORMS = ("energy", "conservative")


@dataclass(frozen=True)
class StepConfig:
    dt: float
    cfl_safety: float = 0.5
    delta_reg: float = 1e-10
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    force_form: str = "energy"
    strict: bool = False
    frozen_velocity: bool = False
    energy_tol_factor: float = 1.0
    linear_tol: float = 1e-12
    linear_max_iter: int = 5000
    energy_scale: float | None = None

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (0 < self.cfl_safety <= 1):
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if not (self.delta_reg > 0):
            raise ValueError(f"delta_reg must be positive, got {self.delta_reg}")
        if self.force_form not in FORCE_FORMS:
            raise ValueError(f"force_form must be one of {FORCE_FORMS}")
        if not (self.energy_tol_factor >= 0):
            raise ValueError("energy_tol_factor must be nonnegative")
        if self.energy_scale is not None and not (self.energy_scale >= 0):
            raise ValueError("energy_scale must be nonnegative")


# ----------------------------------------------------------------------
# helpers

def _lo_hi(grid: Grid, f: np.ndarray, axis: int):
    """Cell values left and right of every face (edge-padded at walls)."""
    pad = [(0, 0)] * grid.dim
    pad[axis] = (1, 1)
    fp = np.pad(f, pad, mode="edge")
    lo = [slice(None)] * grid.dim
    hi = [slice(None)] * grid.dim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    return fp[tuple(lo)], fp[tuple(hi)]


def upwind_face(grid: Grid, f: np.ndarray, vel: np.ndarray, axis: int) -> np.ndarray:
    """Donor-cell face value of ``f`` for face velocity ``vel``; centred where vel = 0."""
    lo, hi = _lo_hi(grid, f, axis)
    return np.where(vel > 0, lo, np.where(vel < 0, hi, 0.5 * (lo + hi)))


def cfl_number(grid: Grid, u) -> float:
    """max over cells of dt-free outflow rate sum |u_out| / h."""
    out = np.zeros(grid.cells)
    for k, h in enumerate(grid.spacing):
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[k] = slice(0, -1)
        hi[k] = slice(1, None)
        out += (np.maximum(u[k][tuple(hi)], 0.0) + np.maximum(-u[k][tuple(lo)], 0.0)) / h
    return float(np.max(out))


# ----------------------------------------------------------------------
# continuity

def mass_fluxes(grid: Grid, rho: np.ndarray, u) -> tuple[np.ndarray, ...]:
    return tuple(upwind_face(grid, rho, u[k], k) * u[k] for k in range(grid.dim))


def step_continuity(grid: Grid, rho: np.ndarray, u, dt: float, cfl_safety: float = 0.5):
    """Donor-cell update; returns (rho_next, mass fluxes).

    The condition dt * max_cell(sum_out |u| / h) <= cfl_safety <= 1 makes
    every new cell value a nonnegative combination of old ones.
    """
    cfl = dt * cfl_number(grid, u)
    if cfl > cfl_safety:
        raise CflError(cfl, cfl_safety, dt)
    F = mass_fluxes(grid, rho, u)
    rho_next = rho - dt * grid.div(F)
    return rho_next, F


# ----------------------------------------------------------------------
# phase

@dataclass
class PhaseStats:
    newton_iters: int = 0
    residual: float = 0.0
    linear_iters: int = 0


class _PhaseSystem:
    def __init__(self, grid: Grid, rho_next, rho, c, F, dt, reg: RegularizedPotential,
                 delta_reg: float, upwind_c: bool):
        self.grid = grid
        self.n = grid.size
        self.rho1 = rho_next
        self.rhohat = np.maximum(rho_next, delta_reg)
        self.dt = dt
        self.reg = reg
        if upwind_c:
            chat = [upwind_face(grid, c, F[k], k) for k in range(grid.dim)]
        else:
            chat = [grid.face_average(c, k) for k in range(grid.dim)]
        conv = grid.div(tuple(F[k] * chat[k] for k in range(grid.dim)))
        self.b1 = rho * c - dt * conv
        self.explicit = reg.theta0 * c
        self.L = grid.laplacian_matrix
        self.lam = grid.laplacian_eigenvalues

    def split(self, x):
        n = self.n
        return x[:n].reshape(self.grid.cells), x[n:].reshape(self.grid.cells)

    def residual(self, x):
        c1, mu1 = self.split(x)
        g = self.grid
        r1 = self.rho1 * c1 - self.b1 - self.dt * g.lap(mu1)
        r2 = self.rhohat * mu1 + g.lap(c1) - self.rho1 * (self.reg.prime(c1) - self.explicit)
        return np.concatenate([r1.ravel(), r2.ravel()])

    def jacobian(self, x):
        c1, _ = self.split(x)
        a = (self.rho1 * self.reg.second(c1)).ravel()
        J = sp.bmat([[sp.diags(self.rho1.ravel()), -self.dt * self.L],
                     [self.L - sp.diags(a), sp.diags(self.rhohat.ravel())]], format="csr")
        self._a_mean = float(np.mean(a))
        return J

    def preconditioner(self):
        """Exact inverse of the constant-coefficient Jacobian in the cosine basis."""
        r0 = float(np.mean(self.rho1))
        d0 = float(np.mean(self.rhohat))
        a0 = self._a_mean
        lam = self.lam
        det = r0 * d0 + self.dt * lam * (lam - a0)
        shape = self.grid.cells
        n = self.n

        def apply(v):
            v1 = fft.dctn(v[:n].reshape(shape), type=2, norm="ortho")
            v2 = fft.dctn(v[n:].reshape(shape), type=2, norm="ortho")
            y1 = (d0 * v1 + self.dt * lam * v2) / det
            y2 = (r0 * v2 - (lam - a0) * v1) / det
            return np.concatenate([fft.idctn(y1, type=2, norm="ortho").ravel(),
                                   fft.idctn(y2, type=2, norm="ortho").ravel()])
        return apply


def step_phase(grid: Grid, rho_next, rho, F, c, mu, dt: float, reg: RegularizedPotential,
               cfg: StepConfig | None = None, stats: PhaseStats | None = None):
    """Implicit Cahn-Hilliard step; returns (c_next, mu_next).

    Solves
        rho1 c1 - rho c + dt div(F c_face) = dt lap(mu1)
        max(rho1, delta) mu1 = -lap(c1) + rho1 (F_eps'(c1) - theta0 c)
    and then restores sum(rho1 c1) = sum(rho c) by a uniform shift of c1
    (removing the mean of the nonlinear-solver residual).
    """
    cfg = cfg or StepConfig(dt=dt)
    sysm = _PhaseSystem(grid, rho_next, rho, c, F, dt, reg, cfg.delta_reg,
                        upwind_c=(cfg.force_form == "conservative"))
    lin_iters = [0]

    def linear_solve(J, rhs):
        st = SolveStats()
        d = bicgstab(J, rhs, tol=cfg.linear_tol, max_iter=cfg.linear_max_iter,
                     precond=sysm.preconditioner(), stats=st)
        lin_iters[0] += st.iterations
        return d, st.iterations

    x0 = np.concatenate([np.asarray(c, dtype=float).ravel(), np.asarray(mu, dtype=float).ravel()])
    res = newton_solve(sysm.residual, sysm.jacobian, x0, cfg.newton, linear_solve=linear_solve)
    c1, _ = sysm.split(res.x)
    vol = grid.cell_volume
    target = np.sum(rho * c) * vol
    c1 = c1 + (target - np.sum(rho_next * c1) * vol) / (np.sum(rho_next) * vol)
    mu1 = (-grid.lap(c1) + rho_next * (reg.prime(c1) - reg.theta0 * c)) / sysm.rhohat
    if stats is not None:
        stats.newton_iters = res.iterations
        stats.residual = float(np.max(np.abs(sysm.residual(np.concatenate([c1.ravel(), mu1.ravel()])))))
        stats.linear_iters = lin_iters[0]
    if not (np.all(np.isfinite(c1)) and np.all(np.isfinite(mu1))):
        raise NonConvergenceError("phase step produced non-finite values", np.inf, res.iterations)
    return c1, mu1


# ----------------------------------------------------------------------
# momentum

def explicit_forces(grid: Grid, rho, rho_next, u, c, mu_next, reg: RegularizedPotential,
                    gamma: float, form: str = "energy") -> tuple[np.ndarray, ...]:
    """Pressure plus capillary force per unit volume on every face."""
    out = []
    if form == "energy":
        h = enthalpy(rho_next, gamma)
        fmix = reg.mixing(c)
        gh = grid.grad(h)
        gc = grid.grad(c)
        gf = grid.grad(fmix)
        for k in range(grid.dim):
            rf = upwind_face(grid, rho, u[k], k)
            mu_f = grid.face_average(mu_next, k)
            out.append(rf * (-gh[k] + mu_f * gc[k] - gf[k]))
    else:
        p = pressure(rho_next, gamma)
        gp = grid.grad(p)
        divK = korteweg_divergence(grid, c)
        for k in range(grid.dim):
            out.append(-gp[k] - divK[k])
    for k in range(grid.dim):
        out[k][~grid.interior_face_mask(k)] = 0.0
    return tuple(out)


def korteweg_divergence(grid: Grid, c: np.ndarray) -> tuple[np.ndarray, ...]:
    """div(grad c (x) grad c - |grad c|^2/2 I) on faces.

    Diagonal entries live at cells (from face-averaged gradients), the 2D
    off-diagonal entry at nodes (from node-averaged gradients).
    """
    gfaces = grid.grad(c)
    gcell = np.stack([grid.cell_average(gfaces[k], k) for k in range(grid.dim)], axis=-1)
    K = korteweg_stress(gcell)
    out = []
    for k in range(grid.dim):
        comp = np.zeros(grid.face_shape(k))
        inner = [slice(None)] * grid.dim
        inner[k] = slice(1, -1)
        comp[tuple(inner)] = np.diff(K[..., k, k], axis=k) / grid.spacing[k]
        out.append(comp)
    if grid.dim == 2:
        gx, gy = gfaces
        # gradients at nodes: gx averaged in y, gy averaged in x (zero beyond walls)
        gxn = 0.5 * (np.pad(gx, ((0, 0), (1, 0))) + np.pad(gx, ((0, 0), (0, 1))))
        gyn = 0.5 * (np.pad(gy, ((1, 0), (0, 0))) + np.pad(gy, ((0, 1), (0, 0))))
        kxy = gxn * gyn
        hx, hy = grid.spacing
        out[0] = out[0] + np.diff(kxy, axis=1) / hy
        out[1] = out[1] + np.diff(kxy, axis=0) / hx
    for k in range(grid.dim):
        out[k][~grid.interior_face_mask(k)] = 0.0
    return tuple(out)


def momentum_convection(grid: Grid, u, F) -> tuple[np.ndarray, ...]:
    """Upwind div(G u) on the dual cells of every face, G from the mass fluxes."""
    out = []
    for k in range(grid.dim):
        conv = np.zeros(grid.face_shape(k))
        for j in range(grid.dim):
            h = grid.spacing[j]
            uk = u[k]
            if j == k:
                G = grid.cell_average(F[k], k)
                lo = [slice(None)] * grid.dim
                hi = [slice(None)] * grid.dim
                lo[k] = slice(0, -1)
                hi[k] = slice(1, None)
                up = np.where(G > 0, uk[tuple(lo)], uk[tuple(hi)])
                Q = G * up
                inner = [slice(None)] * grid.dim
                inner[k] = slice(1, -1)
                conv[tuple(inner)] += np.diff(Q, axis=k) / h
            else:
                # transverse dual faces sit at grid nodes
                Fj = F[j]
                padk = [(0, 0)] * grid.dim
                padk[k] = (1, 1)
                Fp = np.pad(Fj, padk, mode="edge")
                lo = [slice(None)] * grid.dim
                hi = [slice(None)] * grid.dim
                lo[k] = slice(0, -1)
                hi[k] = slice(1, None)
                G = 0.5 * (Fp[tuple(lo)] + Fp[tuple(hi)])
                padj = [(0, 0)] * grid.dim
                padj[j] = (1, 1)
                up_p = np.pad(uk, padj)
                lo = [slice(None)] * grid.dim
                hi = [slice(None)] * grid.dim
                lo[j] = slice(0, -1)
                hi[j] = slice(1, None)
                up = np.where(G > 0, up_p[tuple(lo)], up_p[tuple(hi)])
                Q = G * up
                conv += np.diff(Q, axis=j) / h
        conv[~grid.interior_face_mask(k)] = 0.0
        out.append(conv)
    return tuple(out)


def step_momentum(grid: Grid, rho_next, rho, u, F, forces, c_next, dt: float, prof,
                  cfg: StepConfig | None = None, stats: SolveStats | None = None):
    """Implicit-viscous velocity update on interior faces; walls stay at zero."""
    cfg = cfg or StepConfig(dt=dt)
    vol = grid.cell_volume
    op = ViscousOperator(grid, prof.eta(c_next), prof.lam(c_next))
    conv = momentum_convection(grid, u, F)
    m_old = [grid.face_average(rho, k) for k in range(grid.dim)]
    m_new = [grid.face_average(rho_next, k) for k in range(grid.dim)]
    rhs = op.pack([vol * (m_old[k] * u[k] / dt - conv[k] + forces[k]) for k in range(grid.dim)])
    mass = op.pack([vol * m_new[k] / dt for k in range(grid.dim)])
    idx = op.interior
    A = (sp.diags(mass[idx]) + op.restricted()).tocsr()
    st = stats if stats is not None else SolveStats()
    guess = op.pack(u)[idx]
    w = bicgstab(A, rhs[idx], x0=guess, tol=cfg.linear_tol, max_iter=cfg.linear_max_iter, stats=st)
    full = np.zeros(op.matrix.shape[0])
    full[idx] = w
    return op.unpack(full)


# ----------------------------------------------------------------------
# full step

def force_scale(grid: Grid, forces, rho_next, delta_reg: float = 1e-10) -> float:
    """sum(vol |f|^2 / rho_f), the constant multiplying dt^2 in the energy defect bound."""
    vol = grid.cell_volume
    K = 0.0
    for k, f in enumerate(forces):
        rf = np.maximum(grid.face_average(rho_next, k), delta_reg)
        K += float(np.sum(f * f / rf)) * vol
    return K


def energy_tolerance(grid: Grid, dt: float, cfg: StepConfig, K: float) -> float:
    """C dt^2 K plus the nonlinear-solver contribution abs_tol |Omega|."""
    if cfg.frozen_velocity:
        K = 0.0
    return cfg.energy_tol_factor * dt * dt * K + cfg.newton.abs_tol * grid.volume


def _advance(state: State, cfg: StepConfig, params: PhysicalParams, reg: RegularizedPotential):
    g = state.grid
    dt = cfg.dt
    rho = state.rho.values
    c = state.c.values
    mu = state.mu.values
    u = state.u.components
    if cfg.frozen_velocity:
        rho1 = rho.copy()
        F = tuple(np.zeros(g.face_shape(k)) for k in range(g.dim))
    else:
        rho1, F = step_continuity(g, rho, u, dt, cfg.cfl_safety)
    pst = PhaseStats()
    c1, mu1 = step_phase(g, rho1, rho, F, c, mu, dt, reg, cfg, pst)
    vst = SolveStats()
    if cfg.frozen_velocity:
        u1 = tuple(np.array(x) for x in u)
        forces = tuple(np.zeros(g.face_shape(k)) for k in range(g.dim))
    else:
        forces = explicit_forces(g, rho, rho1, u, c, mu1, reg, params.gamma, cfg.force_form)
        u1 = step_momentum(g, rho1, rho, u, F, forces, c1, dt, params.viscosity, cfg, vst)
    new = State.from_arrays(g, rho1, u1, c1, mu1, state.time + dt, state.eps, state.step + 1)
    return new, force_scale(g, forces, rho1, cfg.delta_reg), pst, vst


def calibrate_energy_scale(state: State, cfg: StepConfig, params: PhysicalParams,
                           reg: RegularizedPotential | None = None) -> float:
    """Force constant K measured by one discarded trial step from ``state``.

    The run then audits every step against C dt^2 K with this fixed K, so a
    growing instability cannot inflate its own tolerance.
    """
    if cfg.frozen_velocity:
        return 0.0
    reg = reg or RegularizedPotential(params.potential, state.eps)
    _, K, _, _ = _advance(state, cfg, params, reg)
    return K


def step(state: State, cfg: StepConfig, params: PhysicalParams, M_r: float | None = None,
         prev: DiagnosticsRecord | None = None, reg: RegularizedPotential | None = None
         ) -> tuple[State, DiagnosticsRecord]:
    """Advance one time step and audit the discrete energy inequality.

    The tolerance uses ``cfg.energy_scale`` when set (the run-start
    calibration); otherwise the force constant of this very step.
    """
    g = state.grid
    dt = cfg.dt
    reg = reg or RegularizedPotential(params.potential, state.eps)
    if M_r is None:
        M_r = float(np.sum(state.rho.values * state.c.values) / np.sum(state.rho.values))
    if prev is None:
        prev = diagnostics.record(state, params, M_r, reg)

    new, K_step, pst, vst = _advance(state, cfg, params, reg)
    rec = diagnostics.record(new, params, M_r, reg)
    defect = rec.E_eps + dt * (rec.visc_dissipation + rec.mu_dissipation) - prev.E_eps
    K = K_step if cfg.energy_scale is None else cfg.energy_scale
    tol = energy_tolerance(g, dt, cfg, K)
    ok = bool(defect <= tol)
    rec = DiagnosticsRecord(**{**diagnostics.as_dict(rec), "energy_defect": defect, "energy_tol": tol,
                               "energy_ok": int(ok), "newton_iters": pst.newton_iters,
                               "newton_residual": pst.residual, "linear_iters_phase": pst.linear_iters,
                               "linear_iters_visc": vst.iterations})
    if cfg.strict and not ok:
        raise EnergyViolationError(new.step, defect, tol)
    return new, rec
