"""Residuals of the limit weak formulations evaluated on stored trajectories.

Every residual is ``|LHS - RHS|`` of an integral identity tested against a
separable function psi(t) phi(x), with tau = T. Space integrals use the
midpoint rule on cells (or on faces for face-located quantities, with half
weight on boundary faces); time integrals use the trapezoid rule on the
snapshot times. Test functions are evaluated analytically, so the residuals
measure the discretization error of the trajectory and tend to zero under
refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .constitutive import cell_gradient, pressure, velocity_gradient, viscous_stress
from .diagnostics import DiagnosticsRecord
from .grid import Grid
from .potential import RegularizedPotential
from .trajectory import Trajectory


class TestSupportError(ValueError):
    """The test function violates the support or boundary requirement."""


# ----------------------------------------------------------------------
# time bumps

BUMP_FAMILIES = ("interior", "initial")


@dataclass(frozen=True)
class Bump:
    """Smooth time profile supported in [0, T0].

    ``interior``: exp(-1/(1 - s^2)), s = 2t/T0 - 1; vanishes at both ends.
    ``initial``:  exp(-1/(1 - s^2)), s = t/T0; nonzero at t = 0 with zero slope.
    Both are scaled by e so the peak value is 1.
    """

    T0: float
    family: str = "interior"

    def __post_init__(self):
        if not self.T0 > 0:
            raise ValueError("bump length T0 must be positive")
        if self.family not in BUMP_FAMILIES:
            raise ValueError(f"bump family must be one of {BUMP_FAMILIES}")

    def _s(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "interior":
            return 2.0 * t / self.T0 - 1.0, 2.0 / self.T0
        return t / self.T0, 1.0 / self.T0

    def value(self, t):
        s, _ = self._s(t)
        inside = (np.abs(s) < 1.0) & (np.asarray(t) >= 0)
        q = np.where(inside, 1.0 - s * s, 1.0)
        return np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)

    def deriv(self, t):
        s, ds = self._s(t)
        inside = (np.abs(s) < 1.0) & (np.asarray(t) >= 0)
        q = np.where(inside, 1.0 - s * s, 1.0)
        return np.where(inside, np.exp(1.0 - 1.0 / q) * (-2.0 * s / (q * q)) * ds, 0.0)


# ----------------------------------------------------------------------
# spatial tests

def _mono(xi, alpha):
    out = np.ones_like(xi[0])
    for x, a in zip(xi, alpha):
        if a:
            out = out * x ** a
    return out


def _poly(coeffs: dict, xi):
    return sum(a * _mono(xi, al) for al, a in coeffs.items())


def _poly_grad(coeffs: dict, xi, L):
    d = len(xi)
    out = [np.zeros_like(xi[0]) for _ in range(d)]
    for al, a in coeffs.items():
        for j in range(d):
            if al[j] == 0:
                continue
            lower = list(al)
            lower[j] -= 1
            out[j] = out[j] + a * al[j] * _mono(xi, lower) / L[j]
    return out


@dataclass(frozen=True)
class ScalarTest:
    """Tensor-product polynomial in normalized coordinates xi = x / L.

    ``coeffs`` maps exponent tuples to coefficients; no boundary condition.
    """

    coeffs: dict
    lengths: tuple

    def value(self, x):
        xi = [xx / L for xx, L in zip(x, self.lengths)]
        return _poly(self.coeffs, xi)

    def grad(self, x):
        xi = [xx / L for xx, L in zip(x, self.lengths)]
        return _poly_grad(self.coeffs, xi, self.lengths)


@dataclass(frozen=True)
class VectorTest:
    """Vector polynomial; with ``wall=True`` each component is multiplied by
    prod_j 4 xi_j (1 - xi_j) so it vanishes on the whole boundary."""

    components: tuple
    lengths: tuple
    wall: bool = True

    def _xi(self, x):
        return [xx / L for xx, L in zip(x, self.lengths)]

    def _wall(self, xi):
        w = np.ones_like(xi[0])
        for x in xi:
            w = w * 4.0 * x * (1.0 - x)
        return w

    def _wall_grad(self, xi):
        out = []
        for j in range(len(xi)):
            g = np.ones_like(xi[0])
            for i, x in enumerate(xi):
                g = g * (4.0 * (1.0 - 2.0 * x) / self.lengths[i] if i == j else 4.0 * x * (1.0 - x))
            out.append(g)
        return out

    def value(self, x, k: int):
        xi = self._xi(x)
        p = _poly(self.components[k], xi)
        return p * self._wall(xi) if self.wall else p

    def grad(self, x, k: int):
        """[d phi_k / d x_j for j]."""
        xi = self._xi(x)
        gp = _poly_grad(self.components[k], xi, self.lengths)
        if not self.wall:
            return gp
        p = _poly(self.components[k], xi)
        w = self._wall(xi)
        gw = self._wall_grad(xi)
        return [gp[j] * w + p * gw[j] for j in range(len(xi))]


@dataclass(frozen=True)
class TestFunction:
    """psi(t) phi(x) times a scalar ``scale``."""

    psi: Bump
    phi: ScalarTest | VectorTest
    scale: float = 1.0

    def scaled(self, alpha: float) -> "TestFunction":
        return TestFunction(self.psi, self.phi, self.scale * alpha)


def default_scalar_test(grid: Grid) -> ScalarTest:
    if grid.dim == 1:
        coeffs = {(0,): 1.0, (1,): 0.5, (2,): -1.0}
    else:
        coeffs = {(0, 0): 1.0, (1, 0): 0.5, (2, 0): -1.0, (0, 1): 0.3, (1, 1): 0.5}
    return ScalarTest(coeffs, tuple(grid.lengths))


def default_vector_test(grid: Grid) -> VectorTest:
    if grid.dim == 1:
        comps = ({(0,): 1.0, (1,): 1.0},)
    else:
        comps = ({(0, 0): 1.0, (1, 0): 1.0}, {(0, 0): 0.5, (0, 1): -1.0})
    return VectorTest(comps, tuple(grid.lengths))


# ----------------------------------------------------------------------
# renormalization pairs

@dataclass(frozen=True)
class RenormalizationPair:
    """b with B(r) = B(1) + int_1^r b(z)/z^2 dz; ``rhoB`` is r B(r), 0 at r = 0."""

    name: str
    b: Callable[[np.ndarray], np.ndarray]
    B: Callable[[np.ndarray], np.ndarray]
    B1: float
    sup_b: float

    def rhoB(self, rho):
        rho = np.asarray(rho, dtype=float)
        pos = rho > 0
        safe = np.where(pos, rho, 1.0)
        return np.where(pos, safe * self.B(safe), 0.0)

    def quadrature_error(self, rhos) -> float:
        """Max |B(r) - (B(1) + quad(b(z)/z^2, 1, r))| over the given densities."""
        err = 0.0
        for r in np.atleast_1d(np.asarray(rhos, dtype=float)):
            f = lambda z: float(self.b(np.array(z))) / (z * z)
            brk = [p for p in self._breaks() if min(1.0, r) < p < max(1.0, r)]
            val, _ = quad(f, 1.0, r, points=brk or None, epsabs=1e-14, epsrel=1e-13, limit=200)
            err = max(err, abs(float(self.B(np.array(r))) - (self.B1 + val)))
        return err

    def _breaks(self):
        return [self.sup_b] if self.name.startswith("min") else []

    def check_bounded(self, rho) -> None:
        vals = self.b(np.asarray(rho, dtype=float))
        if not np.all(np.abs(vals) <= self.sup_b * (1 + 1e-12) + 1e-300):
            raise ValueError(f"b of pair {self.name} is not bounded by {self.sup_b} on this trajectory")


def pair_trivial() -> RenormalizationPair:
    """b = 0, B = 1: the plain continuity equation."""
    return RenormalizationPair("0,1", lambda r: np.zeros_like(np.asarray(r, dtype=float)),
                               lambda r: np.ones_like(np.asarray(r, dtype=float)), 1.0, 0.0)


def pair_truncation(k: float) -> RenormalizationPair:
    """b(z) = min(z, k) with B(1) = 0, so that r B(r) = L_k(r) = r int_1^r min(z,k)/z^2 dz."""
    if not k > 0:
        raise ValueError("truncation level must be positive")

    def B(r):
        r = np.asarray(r, dtype=float)
        if k >= 1.0:
            return np.where(r <= k, np.log(r), math.log(k) + 1.0 - k / r)
        return np.where(r >= k, k * (1.0 - 1.0 / r), (k - 1.0) + np.log(r / k))

    return RenormalizationPair(f"min(z,{k:g}),L{k:g}", lambda r: np.minimum(np.asarray(r, dtype=float), k),
                               B, 0.0, float(k))


def library_pairs() -> list[RenormalizationPair]:
    return [pair_trivial(), pair_truncation(1.0), pair_truncation(2.0)]


# ----------------------------------------------------------------------
# quadrature helpers

def _face_weights(grid: Grid, k: int) -> np.ndarray:
    w = np.full(grid.face_shape(k), grid.cell_volume)
    idx = [slice(None)] * grid.dim
    idx[k] = 0
    w[tuple(idx)] *= 0.5
    idx[k] = -1
    w[tuple(idx)] *= 0.5
    return w


def _time_weights(traj: Trajectory, psi: Bump):
    traj.check_uniform()
    t = traj.times
    T = t[-1]
    if psi.T0 > T * (1 + 1e-12):
        raise TestSupportError(f"test support [0, {psi.T0:g}] exceeds the trajectory end T = {T:g}")
    if abs(float(psi.value(T))) > 0:
        raise TestSupportError("test function does not vanish at t = T")
    h = traj.dt_snap
    w = np.full(len(t), h)
    w[0] *= 0.5
    w[-1] *= 0.5
    # int psi' a dt with a linear between snapshots: weights (P[n] - P[n-1]) / h with
    # P the interval integrals of psi; they telescope to psi(T) - psi(0) exactly
    x, gw = np.polynomial.legendre.leggauss(8)
    mid = 0.5 * (t[:-1] + t[1:])
    P = np.array([0.5 * h * np.sum(gw * psi.value(m + 0.5 * h * x)) for m in mid])
    W = np.zeros(len(t))
    W[0] = -float(psi.value(t[0])) + P[0] / h
    W[1:-1] = (P[1:] - P[:-1]) / h
    W[-1] = float(psi.value(t[-1])) - P[-1] / h
    return t, w, np.array([psi.value(ti) for ti in t]), W / w


class _Geometry:
    """Test-function samples on cells and faces of one grid."""

    def __init__(self, grid: Grid, phi):
        self.grid = grid
        xc = grid.cell_centers()
        self.fw = [_face_weights(grid, k) for k in range(grid.dim)]
        if isinstance(phi, ScalarTest):
            self.phi_c = phi.value(xc)
            self.grad_f = [phi.grad(grid.face_centers(k))[k] for k in range(grid.dim)]
            self.grad_c = phi.grad(xc)
        else:
            self.phi_f = [phi.value(grid.face_centers(k), k) for k in range(grid.dim)]
            # G[..., i, j] = d phi_i / d x_j at cell centres, embedded in 3x3
            G = np.zeros(grid.cells + (3, 3))
            for i in range(grid.dim):
                gi = phi.grad(xc, i)
                for j in range(grid.dim):
                    G[..., i, j] = gi[j]
            self.grad_cell = G
            self.div_c = np.trace(G, axis1=-2, axis2=-1)
            # telescopes to zero against constants, as the face pressure gradient does
            self.div_h = grid.div(self.phi_f)


def _check_vector_boundary(grid: Grid, phi: VectorTest, tol: float = 1e-12) -> None:
    worst = 0.0
    for k in range(grid.dim):
        for j in range(grid.dim):
            pts = grid.face_centers(j)
            vals = phi.value(pts, k)
            idx = [slice(None)] * grid.dim
            for end in (0, -1):
                idx[j] = end
                worst = max(worst, float(np.max(np.abs(vals[tuple(idx)]))))
    if worst > tol:
        raise TestSupportError(f"momentum test does not vanish on the boundary (max |phi| = {worst:.3e})")


# ----------------------------------------------------------------------
# residuals

def residual_renormalized_continuity(traj: Trajectory, pair: RenormalizationPair,
                                     test: TestFunction) -> float:
    """|[int rho B(rho) phi]_0^T - int int rho B(rho)(phi_t + u.grad phi) - b(rho) div u phi|."""
    if not isinstance(test.phi, ScalarTest):
        raise TypeError("continuity tests are scalar")
    g = traj.grid
    geo = _Geometry(g, test.phi)
    t, w, psi, dpsi = _time_weights(traj, test.psi)
    rhs = 0.0
    for n, s in enumerate(traj.states):
        rho = s.rho.values
        u = s.u.components
        pair.check_bounded(rho)
        rB = pair.rhoB(rho)
        a = g.integrate(rB * geo.phi_c)
        flux = sum(float(np.sum(g.face_average(rB, k) * u[k] * geo.grad_f[k] * geo.fw[k]))
                   for k in range(g.dim))
        src = g.integrate(pair.b(rho) * g.div(u) * geo.phi_c)
        rhs += w[n] * (dpsi[n] * a + psi[n] * (flux - src))
    lhs = -psi[0] * g.integrate(pair.rhoB(traj.states[0].rho.values) * geo.phi_c)
    return test.scale * abs(lhs - rhs)


def residual_momentum(traj: Trajectory, test: TestFunction) -> float:
    """Momentum identity with convection, pressure, viscous and capillary terms."""
    if not isinstance(test.phi, VectorTest):
        raise TypeError("momentum tests are vector fields")
    g = traj.grid
    _check_vector_boundary(g, test.phi)
    geo = _Geometry(g, test.phi)
    t, w, psi, dpsi = _time_weights(traj, test.psi)
    gamma = traj.params.gamma
    prof = traj.params.viscosity
    G = geo.grad_cell
    d = g.dim

    def mom_dot_phi(s):
        return sum(float(np.sum(g.face_average(s.rho.values, k) * s.u.components[k] * geo.phi_f[k] * geo.fw[k]))
                   for k in range(d))

    rhs = 0.0
    for n, s in enumerate(traj.states):
        rho = s.rho.values
        c = s.c.values
        u = s.u.components
        ucell = [g.cell_average(u[k], k) for k in range(d)]
        conv = np.zeros(g.cells)
        for i in range(d):
            for j in range(d):
                conv += rho * ucell[i] * ucell[j] * G[..., i, j]
        S = viscous_stress(c, velocity_gradient(g, u), prof)
        visc = np.sum(S * G, axis=(-2, -1))
        gc = cell_gradient(g, c)
        kort = -0.5 * np.sum(gc * gc, axis=-1) * geo.div_c
        for i in range(d):
            for j in range(d):
                kort += gc[..., i] * gc[..., j] * G[..., i, j]
        body = g.integrate(conv + pressure(rho, gamma) * geo.div_h - visc + kort)
        rhs += w[n] * (dpsi[n] * mom_dot_phi(s) + psi[n] * body)
    lhs = -psi[0] * mom_dot_phi(traj.states[0])
    return test.scale * abs(lhs - rhs)


def residual_concentration(traj: Trajectory, test: TestFunction) -> float:
    """|[int rho c phi]_0^T - int int rho c (phi_t + u.grad phi) - grad mu . grad phi|."""
    if not isinstance(test.phi, ScalarTest):
        raise TypeError("concentration tests are scalar")
    g = traj.grid
    geo = _Geometry(g, test.phi)
    t, w, psi, dpsi = _time_weights(traj, test.psi)
    rhs = 0.0
    for n, s in enumerate(traj.states):
        rc = s.rho.values * s.c.values
        u = s.u.components
        gm = g.grad(s.mu.values)
        a = g.integrate(rc * geo.phi_c)
        flux = sum(float(np.sum(g.face_average(rc, k) * u[k] * geo.grad_f[k] * geo.fw[k]))
                   for k in range(g.dim))
        diff = sum(float(np.sum(gm[k] * geo.grad_f[k] * geo.fw[k])) for k in range(g.dim))
        rhs += w[n] * (dpsi[n] * a + psi[n] * (flux - diff))
    lhs = -psi[0] * g.integrate(traj.states[0].rho.values * traj.states[0].c.values * geo.phi_c)
    return test.scale * abs(lhs - rhs)


def residual_chemical_potential(traj: Trajectory, test: TestFunction, *, lagged: bool = False,
                                gradient: str = "analytic") -> float:
    """|int int rho mu phi - rho F'_eps(c) phi + theta0 rho c phi - grad c . grad phi|.

    ``lagged`` evaluates the theta0 term at the previous snapshot, as the
    convex-split scheme does (needs a stride-1 trajectory). ``gradient =
    "discrete"`` pairs grad c with the face differences of the sampled test
    function, for which the scheme satisfies the identity to rounding error.
    The product rho F'_eps(c) is taken as 0 on vacuum cells.
    """
    if not isinstance(test.phi, ScalarTest):
        raise TypeError("chemical-potential tests are scalar")
    if test.psi.family != "interior":
        raise TestSupportError("chemical-potential tests must vanish at t = 0")
    if gradient not in ("analytic", "discrete"):
        raise ValueError("gradient must be 'analytic' or 'discrete'")
    if lagged and traj.stride != 1:
        raise ValueError("the lagged form needs every time step stored (stride 1)")
    g = traj.grid
    geo = _Geometry(g, test.phi)
    t, w, psi, _ = _time_weights(traj, test.psi)
    reg = RegularizedPotential(traj.params.potential, traj.eps)
    grad_phi = g.grad(geo.phi_c) if gradient == "discrete" else geo.grad_f
    total = 0.0
    for n, s in enumerate(traj.states):
        if psi[n] == 0.0:
            continue
        rho = s.rho.values
        c = s.c.values
        c_th = traj.states[n - 1].c.values if (lagged and n > 0) else c
        rfp = np.where(rho > 0, rho * reg.prime(c), 0.0)
        gc = g.grad(c)
        lap_term = sum(float(np.sum(gc[k] * grad_phi[k] * geo.fw[k])) for k in range(g.dim))
        val = g.integrate((rho * s.mu.values - rfp + reg.theta0 * rho * c_th) * geo.phi_c) - lap_term
        total += w[n] * psi[n] * val
    return test.scale * abs(total)


# ----------------------------------------------------------------------
# energy inequality

@dataclass
class EnergyAudit:
    E0: float
    margins: np.ndarray
    tolerances: np.ndarray
    worst_margin: float
    worst_step: int
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def audit_energy_inequality(source, dt: float | None = None) -> EnergyAudit:
    """Check E(tau) + int_0^tau (S:grad u + |grad mu|^2) <= E0 + accumulated tolerance.

    ``source`` is a Trajectory or a list of DiagnosticsRecord (then ``dt`` is
    taken from the record times). Margins are E0 - E(tau) - dissipation, so a
    negative margin larger than the accumulated tolerance is a violation.
    """
    recs: list[DiagnosticsRecord] = list(source.records if isinstance(source, Trajectory) else source)
    if len(recs) < 1:
        raise ValueError("audit needs diagnostics records")
    E0 = recs[0].E_eps
    margins = [0.0]
    tols = [0.0]
    diss = 0.0
    acc = 0.0
    for prev, r in zip(recs[:-1], recs[1:]):
        h = (r.time - prev.time) if dt is None else dt
        diss += h * (r.visc_dissipation + r.mu_dissipation)
        acc += r.energy_tol
        margins.append(E0 - r.E_eps - diss)
        tols.append(acc)
    margins = np.array(margins)
    tols = np.array(tols)
    viol = [(recs[i].step, float(margins[i]), float(tols[i]))
            for i in range(len(recs)) if margins[i] < -tols[i]]
    # step 0 has margin 0 by definition; report the worst later step when there is one
    lo = 1 if len(recs) > 1 else 0
    i = lo + int(np.argmin((margins + tols)[lo:]))
    return EnergyAudit(E0, margins, tols, float(margins[i]), recs[i].step, viol)


# ----------------------------------------------------------------------
# standard residual set and refinement

def standard_residuals(traj: Trajectory, T0: float | None = None) -> dict[str, float]:
    """All residuals with the default tests; bump length 0.9 T unless given.

    Keys ending in ``@t0`` use the ``initial`` bump, which also tests the
    initial-data term; the others use the interior bump.
    """
    g = traj.grid
    T0 = 0.9 * traj.T if T0 is None else T0
    ts = default_scalar_test(g)
    tv = default_vector_test(g)
    out = {}
    for fam, suffix in (("interior", ""), ("initial", "@t0")):
        bump = Bump(T0, fam)
        for pair in library_pairs():
            out[f"WF2[{pair.name}]{suffix}"] = residual_renormalized_continuity(traj, pair, TestFunction(bump, ts))
        out[f"WF3{suffix}"] = residual_momentum(traj, TestFunction(bump, tv))
        out[f"WF4{suffix}"] = residual_concentration(traj, TestFunction(bump, ts))
    out["WF5"] = residual_chemical_potential(traj, TestFunction(Bump(T0, "interior"), ts))
    return out


@dataclass
class RefinementTable:
    names: list
    levels: list             # list of (cells, dt)
    residuals: list          # per level: dict name -> value

    def ratios(self) -> dict[str, list[float]]:
        out = {}
        for name in self.names:
            vals = [r[name] for r in self.residuals]
            out[name] = [a / b if b > 0 else math.inf for a, b in zip(vals[:-1], vals[1:])]
        return out

    def orders(self) -> dict[str, list[float]]:
        return {k: [math.log2(x) if x > 0 else -math.inf for x in v] for k, v in self.ratios().items()}

    def min_order(self) -> float:
        vals = [o for v in self.orders().values() for o in v]
        return min(vals) if vals else math.inf

    def format(self) -> str:
        head = ["residual"] + [f"N={lv[0]},dt={lv[1]:.3g}" for lv in self.levels] + \
               [f"order{i}" for i in range(1, len(self.levels))]
        rows = [head]
        orders = self.orders()
        for name in self.names:
            rows.append([name] + [f"{r[name]:.4e}" for r in self.residuals] + [f"{o:.2f}" for o in orders[name]])
        widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
        return "\n".join("  ".join(c.ljust(wd) for c, wd in zip(r, widths)) for r in rows)


def refinement_study(trajectories: list[Trajectory], T0: float | None = None) -> RefinementTable:
    """Residual table across trajectories that halve (h, dt) level by level."""
    if len(trajectories) < 2:
        raise ValueError("refinement study needs at least two levels")
    T0 = 0.9 * min(tr.T for tr in trajectories) if T0 is None else T0
    res = [standard_residuals(tr, T0) for tr in trajectories]
    levels = [(tr.grid.cells[0], tr.dt) for tr in trajectories]
    return RefinementTable(list(res[0].keys()), levels, res)
