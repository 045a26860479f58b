"""Closures of the model: pressure, Newtonian stress, capillary stress, energy.

Tensor fields are cell-centred arrays with two trailing axes. The viscous
stress is always returned as a 3x3 tensor (the velocity gradient is embedded
with zero padding) so the -2/3 div u deviatoric factor keeps its
three-dimensional meaning on 1D and 2D grids. The capillary tensor lives in
the grid dimension.

The discrete viscous dissipation is a sum of squares over cells and grid
nodes. ``viscous_dissipation`` evaluates it and ``ViscousOperator`` assembles
the symmetric matrix A with ``u.A.u`` equal to the same quantity, so the
implicit momentum solve and the energy audit share one definition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .grid import Grid
from .potential import DomainError, PotentialParams, RegularizedPotential, elastic_energy, flory_huggins


# ----------------------------------------------------------------------
# viscosity profiles

@dataclass(frozen=True)
class ViscosityProfile:
    eta: Callable[[np.ndarray], np.ndarray]
    lam: Callable[[np.ndarray], np.ndarray]
    eta_lo: float
    eta_hi: float
    lam_hi: float
    eta_spec: str = ""
    lam_spec: str = ""

    def __post_init__(self):
        if not (0 < self.eta_lo <= self.eta_hi):
            raise ValueError(f"need 0 < eta_lo <= eta_hi, got {self.eta_lo}, {self.eta_hi}")
        if not (self.lam_hi >= 0):
            raise ValueError(f"need lambda_hi >= 0, got {self.lam_hi}")

    def check_bounds(self, samples: np.ndarray | None = None) -> bool:
        c = np.linspace(-20.0, 20.0, 4001) if samples is None else samples
        e = self.eta(c)
        lv = self.lam(c)
        return bool(np.all(e >= self.eta_lo - 1e-14) and np.all(e <= self.eta_hi + 1e-14)
                    and np.all(lv >= 0) and np.all(lv <= self.lam_hi + 1e-14))


def parse_profile(spec: str, *, allow_zero: bool) -> tuple[Callable, float, float]:
    """Parse ``constant:a`` or ``rational:lo,hi`` into (function, lower, upper).

    ``rational:lo,hi`` is lo + (hi - lo)/(1 + c^2), which decreases from hi at
    c = 0 towards lo as |c| grows.
    """
    kind, _, args = spec.strip().partition(":")
    kind = kind.strip().lower()
    try:
        vals = [float(a) for a in args.split(",")] if args.strip() else []
    except ValueError:
        raise ValueError(f"bad viscosity parameters in {spec!r}") from None
    if kind == "constant" and len(vals) == 1:
        a = vals[0]
        if a < 0 or (a == 0 and not allow_zero):
            raise ValueError(f"viscosity {spec!r} must be {'nonnegative' if allow_zero else 'positive'}")
        return (lambda c, a=a: np.full(np.shape(c), a)), a, a
    if kind == "rational" and len(vals) == 2:
        lo, hi = vals
        if lo > hi or lo < 0 or (lo == 0 and not allow_zero):
            raise ValueError(f"rational profile {spec!r} needs 0 < lo <= hi")
        return (lambda c, lo=lo, hi=hi: lo + (hi - lo) / (1.0 + np.asarray(c) ** 2)), lo, hi
    raise ValueError(f"unknown viscosity spec {spec!r}; use constant:a or rational:lo,hi")


def make_profile(eta_spec: str = "rational:0.5,1.0", lam_spec: str = "constant:0") -> ViscosityProfile:
    eta, elo, ehi = parse_profile(eta_spec, allow_zero=False)
    lam, _, lhi = parse_profile(lam_spec, allow_zero=True)
    return ViscosityProfile(eta, lam, elo, ehi, lhi, eta_spec, lam_spec)


# ----------------------------------------------------------------------
# pointwise closures

def pressure(rho: np.ndarray, gamma: float) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    bad = np.argwhere(rho < 0)
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        raise DomainError(f"negative density {rho[idx]:.3e} at cell {idx}")
    return rho ** gamma


def velocity_gradient(grid: Grid, u) -> np.ndarray:
    """Cell-centred 3x3 velocity gradient, G[..., i, j] = d u_i / d x_j.

    Diagonal entries are exact cell differences; 2D off-diagonals are nodal
    differences (no-slip ghosts) averaged to the cell.
    """
    G = np.zeros(grid.cells + (3, 3))
    for k in range(grid.dim):
        G[..., k, k] = np.diff(u[k], axis=k) / grid.spacing[k]
    if grid.dim == 2:
        dyux, dxuy = node_shear_parts(grid, u)
        G[..., 0, 1] = _node_to_cell(dyux)
        G[..., 1, 0] = _node_to_cell(dxuy)
    return G


def viscous_stress(c: np.ndarray, grad_u: np.ndarray, prof: ViscosityProfile) -> np.ndarray:
    """S = eta(c)(grad u + grad u^T - 2/3 div u I) + lambda(c) div u I (3x3)."""
    gu = np.asarray(grad_u, dtype=float)
    if gu.shape[-2:] != (3, 3):
        full = np.zeros(gu.shape[:-2] + (3, 3))
        d = gu.shape[-1]
        full[..., :d, :d] = gu
        gu = full
    if gu.shape[:-2] != np.shape(c):
        raise ValueError("c and grad_u must share the cell shape")
    eta = prof.eta(c)[..., None, None]
    lam = prof.lam(c)[..., None, None]
    divu = np.trace(gu, axis1=-2, axis2=-1)[..., None, None]
    eye = np.eye(3)
    return eta * (gu + np.swapaxes(gu, -1, -2) - (2.0 / 3.0) * divu * eye) + lam * divu * eye


def korteweg_stress(grad_c: np.ndarray) -> np.ndarray:
    """K = grad c (x) grad c - |grad c|^2 / 2 I with grad c given as (..., d)."""
    g = np.asarray(grad_c, dtype=float)
    d = g.shape[-1]
    sq = np.sum(g * g, axis=-1)[..., None, None]
    return g[..., :, None] * g[..., None, :] - 0.5 * sq * np.eye(d)


def cell_gradient(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Face gradient averaged to cell centres, shape cells + (dim,)."""
    out = np.zeros(grid.cells + (grid.dim,))
    for k, g in enumerate(grid.grad(f)):
        out[..., k] = grid.cell_average(g, k)
    return out


def energy_density(grid: Grid, rho, u, c, gamma: float, theta0: float,
                   potential: RegularizedPotential | float) -> np.ndarray:
    """Cellwise total energy density.

    ``potential`` is either a RegularizedPotential or the entropy temperature
    theta of the singular potential. In the singular case cells with rho > 0
    and |c| > 1 yield +inf; rho F(c) is taken as 0 on vacuum cells. Squared
    face quantities |u|^2 and |grad c|^2 are averaged to cells, which makes
    the sum over cells equal the face-based discrete energy exactly.
    """
    rho = np.asarray(rho, dtype=float)
    c = np.asarray(c, dtype=float)
    kin = np.zeros(grid.cells)
    grad2 = np.zeros(grid.cells)
    for k in range(grid.dim):
        kin += grid.cell_average(u[k] ** 2, k)
    for k, g in enumerate(grid.grad(c)):
        grad2 += grid.cell_average(g * g, k)
    if isinstance(potential, RegularizedPotential):
        mix = rho * potential.value(c)
    else:
        theta = float(potential)
        occupied = rho > 0
        mix = np.zeros(grid.cells)
        bad = occupied & (np.abs(c) > 1.0)
        if np.any(bad):
            mix = np.where(bad, np.inf, mix)
        ok = occupied & ~bad
        if np.any(ok):
            mix[ok] = rho[ok] * flory_huggins(c[ok], theta)
    return (0.5 * rho * kin + elastic_energy(rho, gamma) + mix
            - 0.5 * theta0 * rho * c * c + 0.5 * grad2)


# ----------------------------------------------------------------------
# discrete viscous form


def node_weights(grid: Grid) -> np.ndarray:
    """Dual-cell weights of grid nodes: 1 inside, 1/2 on edges, 1/4 at corners."""
    nx, ny = grid.cells
    wx = np.ones(nx + 1)
    wy = np.ones(ny + 1)
    wx[[0, -1]] = 0.5
    wy[[0, -1]] = 0.5
    return wx[:, None] * wy[None, :]


def node_average(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Average of the (up to four) cells touching each node."""
    fp = np.pad(f, 1, mode="edge")
    return 0.25 * (fp[:-1, :-1] + fp[1:, :-1] + fp[:-1, 1:] + fp[1:, 1:])


def _node_to_cell(g: np.ndarray) -> np.ndarray:
    return 0.25 * (g[:-1, :-1] + g[1:, :-1] + g[:-1, 1:] + g[1:, 1:])


def node_shear_parts(grid: Grid, u) -> tuple[np.ndarray, np.ndarray]:
    """(d ux/dy, d uy/dx) at grid nodes using odd reflection across walls."""
    hx, hy = grid.spacing
    ux, uy = u
    uxg = np.concatenate([-ux[:, :1], ux, -ux[:, -1:]], axis=1)
    uyg = np.concatenate([-uy[:1, :], uy, -uy[-1:, :]], axis=0)
    return np.diff(uxg, axis=1) / hy, np.diff(uyg, axis=0) / hx


def viscous_dissipation(grid: Grid, u, eta_cells: np.ndarray, lam_cells: np.ndarray) -> float:
    """Discrete integral of S : grad u for face velocities ``u``."""
    vol = grid.cell_volume
    diag = [np.diff(u[k], axis=k) / grid.spacing[k] for k in range(grid.dim)]
    divu = sum(diag)
    sq = sum(d * d for d in diag)
    dens = eta_cells * (2.0 * sq - (2.0 / 3.0) * divu * divu) + lam_cells * divu * divu
    total = np.sum(dens)
    if grid.dim == 2:
        a, b = node_shear_parts(grid, u)
        s = a + b
        total += np.sum(node_weights(grid) * node_average(grid, eta_cells) * s * s)
    return float(total * vol)


class ViscousOperator:
    """Symmetric positive semidefinite matrix of the discrete dissipation.

    Acts on the concatenation of all face values (boundary faces included);
    ``restrict`` selects the interior-face unknowns.
    """

    def __init__(self, grid: Grid, eta_cells: np.ndarray, lam_cells: np.ndarray):
        self.grid = grid
        vol = grid.cell_volume
        sizes = [grid.face_size(k) for k in range(grid.dim)]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        div_blocks = [grid.divergence_matrix(k) for k in range(grid.dim)]
        n_cells = grid.size
        zero = lambda k: sp.csr_matrix((n_cells, sizes[k]))
        e = eta_cells.ravel()
        lam = lam_cells.ravel()
        parts = []
        Div = sp.hstack(div_blocks, format="csr")
        for k in range(grid.dim):
            Dk = sp.hstack([div_blocks[j] if j == k else zero(j) for j in range(grid.dim)],
                           format="csr")
            parts.append(Dk.T @ sp.diags(2.0 * vol * e) @ Dk)
        parts.append(Div.T @ sp.diags(vol * (lam - (2.0 / 3.0) * e)) @ Div)
        if grid.dim == 2:
            Sh = self._shear_matrix()
            w = (node_weights(grid) * node_average(grid, eta_cells)).ravel()
            parts.append(Sh.T @ sp.diags(vol * w) @ Sh)
        A = parts[0]
        for p in parts[1:]:
            A = A + p
        self.matrix = A.tocsr()
        mask = np.concatenate([grid.interior_face_mask(k).ravel() for k in range(grid.dim)])
        self.interior = np.flatnonzero(mask)

    def _shear_matrix(self) -> sp.csr_matrix:
        nx, ny = self.grid.cells
        hx, hy = self.grid.spacing

        def ghost_diff(n, h):
            # (n+1) x n, rows j: (u_j - u_{j-1})/h with odd ghosts at both ends
            d = sp.lil_matrix((n + 1, n))
            d[0, 0] = 2.0 / h
            d[n, n - 1] = -2.0 / h
            for j in range(1, n):
                d[j, j] = 1.0 / h
                d[j, j - 1] = -1.0 / h
            return d.tocsr()

        dy = sp.kron(sp.identity(nx + 1), ghost_diff(ny, hy), format="csr")
        dx = sp.kron(ghost_diff(nx, hx), sp.identity(ny + 1), format="csr")
        return sp.hstack([dy, dx], format="csr")

    def pack(self, u) -> np.ndarray:
        return np.concatenate([np.asarray(c).ravel() for c in u])

    def unpack(self, vec: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(vec[self.offsets[k]:self.offsets[k + 1]].reshape(self.grid.face_shape(k))
                     for k in range(self.grid.dim))

    def restricted(self) -> sp.csr_matrix:
        idx = self.interior
        return self.matrix[idx][:, idx].tocsr()


@dataclass(frozen=True)
class PhysicalParams:
    """Potential parameters plus the viscosity profiles; no body force."""

    potential: PotentialParams
    viscosity: ViscosityProfile

    @property
    def gamma(self) -> float:
        return self.potential.gamma

    @property
    def theta(self) -> float:
        return self.potential.theta

    @property
    def theta0(self) -> float:
        return self.potential.theta0
