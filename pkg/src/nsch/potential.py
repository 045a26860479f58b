"""Flory-Huggins entropy, its C2 regularization and the elastic energy.

The singular entropy

    F(c) = theta/2 * [(1 + c) ln(1 + c) + (1 - c) ln(1 - c)],   |c| <= 1

is replaced outside [-1 + eps, 1 - eps] by its second-order Taylor
polynomial about the nearer seam point s = +-(1 - eps). The resulting F_eps is
defined on all of R, even, strictly convex and C2 across the seams. The
concave part of the mixing energy is -theta0/2 c^2, and G_eps = F_eps' - theta0 c.

All evaluators accept scalars or arrays. Evenness and oddness are exact in
floating point because every branch is evaluated on |c| and the sign is
reattached afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate


class DomainError(ValueError):
    """Argument outside the domain of a singular function."""


class ParameterError(ValueError):
    """Physical parameters violate the admissibility conditions."""


@dataclass(frozen=True)
class PotentialParams:
    theta: float
    theta0: float
    gamma: float

    def __post_init__(self):
        problems = []
        if not (self.theta > 0):
            problems.append(f"theta must be positive (0 < theta < theta0), got {self.theta}")
        if not (self.theta < self.theta0):
            problems.append(
                f"thermodynamical condition 0 < theta < theta0 violated: "
                f"theta={self.theta}, theta0={self.theta0}")
        if not (self.gamma > 1.5):
            problems.append(f"adiabatic exponent must satisfy gamma > 3/2, got {self.gamma}")
        if problems:
            raise ParameterError("; ".join(problems))


def _as_array(c):
    arr = np.asarray(c, dtype=float)
    return arr, arr.ndim == 0


def _ret(arr, scalar):
    return float(arr) if scalar else arr


# ----------------------------------------------------------------------
# singular potential

def flory_huggins(c, theta: float):
    """F(c) with the continuous extension F(+-1) = theta ln 2."""
    arr, scalar = _as_array(c)
    if np.any(~np.isfinite(arr)) or np.any(np.abs(arr) > 1.0):
        raise DomainError("flory_huggins requires |c| <= 1")
    a = np.abs(arr)
    a_open = np.where(a < 1.0, a, 0.0)
    lo = np.where(a < 1.0, (1.0 - a_open) * np.log1p(-a_open), 0.0)
    val = 0.5 * theta * ((1.0 + a) * np.log1p(a) + lo)
    return _ret(val, scalar)


def flory_huggins_prime(c, theta: float):
    """F'(c) = theta/2 ln((1 + c)/(1 - c)) = theta artanh(c)."""
    arr, scalar = _as_array(c)
    if np.any(~np.isfinite(arr)) or np.any(np.abs(arr) >= 1.0):
        raise DomainError("F' diverges at |c| = 1; requires |c| < 1")
    a = np.abs(arr)
    return _ret(np.sign(arr) * theta * np.arctanh(a), scalar)


def flory_huggins_second(c, theta: float):
    """F''(c) = theta / (1 - c^2)."""
    arr, scalar = _as_array(c)
    if np.any(~np.isfinite(arr)) or np.any(np.abs(arr) >= 1.0):
        raise DomainError("F'' diverges at |c| = 1; requires |c| < 1")
    a = np.abs(arr)
    return _ret(theta / ((1.0 - a) * (1.0 + a)), scalar)


# ----------------------------------------------------------------------
# regularization

@dataclass(frozen=True)
class RegularizedPotential:
    """Piecewise Taylor regularization F_eps with cached seam data."""

    params: PotentialParams
    eps: float

    def __post_init__(self):
        if not (0.0 < self.eps < 0.5):
            raise ParameterError(f"eps must lie in (0, 1/2), got {self.eps}")
        s = 1.0 - self.eps
        th = self.params.theta
        object.__setattr__(self, "seam", s)
        object.__setattr__(self, "f_s", flory_huggins(s, th))
        object.__setattr__(self, "f1_s", flory_huggins_prime(s, th))
        object.__setattr__(self, "f2_s", flory_huggins_second(s, th))

    @property
    def theta(self) -> float:
        return self.params.theta

    @property
    def theta0(self) -> float:
        return self.params.theta0

    def _split(self, c):
        arr, scalar = _as_array(c)
        a = np.abs(arr)
        outer = a > self.seam
        a_in = np.where(outer, 0.0, a)
        d = np.where(outer, a - self.seam, 0.0)
        return arr, scalar, a_in, d, outer

    def value(self, c):
        arr, scalar, a_in, d, outer = self._split(c)
        inner = flory_huggins(a_in, self.theta)
        taylor = self.f_s + self.f1_s * d + 0.5 * self.f2_s * d * d
        return _ret(np.where(outer, taylor, inner), scalar)

    def prime(self, c):
        arr, scalar, a_in, d, outer = self._split(c)
        inner = self.theta * np.arctanh(a_in)
        taylor = self.f1_s + self.f2_s * d
        return _ret(np.sign(arr) * np.where(outer, taylor, inner), scalar)

    def second(self, c):
        arr, scalar, a_in, d, outer = self._split(c)
        inner = self.theta / ((1.0 - a_in) * (1.0 + a_in))
        return _ret(np.where(outer, self.f2_s, inner), scalar)

    def mixing(self, c):
        """f_mix,eps(c) = F_eps(c) - theta0/2 c^2."""
        arr, scalar = _as_array(c)
        return _ret(np.asarray(self.value(arr)) - 0.5 * self.theta0 * arr * arr, scalar)

    def g(self, c):
        """G_eps(c) = F_eps'(c) - theta0 c."""
        arr, scalar = _as_array(c)
        return _ret(np.asarray(self.prime(arr)) - self.theta0 * arr, scalar)


def reg_potential(c, reg: RegularizedPotential):
    return reg.value(c)


def reg_prime(c, reg: RegularizedPotential):
    return reg.prime(c)


def reg_second(c, reg: RegularizedPotential):
    return reg.second(c)


def g_eps_prime(c, reg: RegularizedPotential, theta0: float | None = None):
    """G_eps'(c) = F_eps''(c) - theta0."""
    t0 = reg.theta0 if theta0 is None else theta0
    arr, scalar = _as_array(c)
    return _ret(np.asarray(reg.second(arr)) - t0, scalar)


# ----------------------------------------------------------------------
# elastic energy

def elastic_energy(rho, gamma: float):
    """rho^gamma / (gamma - 1), the density of the elastic energy."""
    arr, scalar = _as_array(rho)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError("density must be finite and nonnegative")
    return _ret(arr ** gamma / (gamma - 1.0), scalar)


def enthalpy(rho, gamma: float):
    """Derivative of the elastic energy density: gamma rho^(gamma-1)/(gamma-1)."""
    arr = np.asarray(rho, dtype=float)
    return gamma * arr ** (gamma - 1.0) / (gamma - 1.0)


def elastic_energy_quadrature(rho: float, gamma: float) -> float:
    """rho * f_e(rho) with f_e(rho) = int_1^rho z^gamma / z^2 dz by adaptive quadrature.

    Differs from ``elastic_energy`` by the affine term -rho/(gamma-1), which
    integrates to a constant under mass conservation.
    """
    if rho < 0:
        raise DomainError("density must be nonnegative")
    if rho == 0:
        return 0.0
    val, _ = integrate.quad(lambda z: z ** (gamma - 2.0), 1.0, rho,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return rho * val


def elastic_affine_shift(rho, gamma: float):
    """The affine normalization separating the two elastic energy forms."""
    return -np.asarray(rho, dtype=float) / (gamma - 1.0)


# ----------------------------------------------------------------------
# invariant checks used by the verify-potential command

def _check(name, ok, detail):
    return {"check": name, "passed": bool(ok), "detail": detail}


def envelope_samples(n: int = 10_000) -> np.ndarray:
    """Deterministic samples of (-1, 1), half uniform and half clustered at +-1."""
    half = n // 2
    uni = np.linspace(-1.0, 1.0, half + 2)[1:-1]
    k = np.arange(1, n - half + 1)
    cheb = np.cos(np.pi * (k - 0.5) / (n - half))
    return np.sort(np.concatenate([uni, cheb]))


def verify_potential(theta: float, theta0: float, eps: float, gamma: float = 2.0,
                     n_samples: int = 10_000, seam_tol: float = 1e-8) -> list[dict]:
    """Evaluate the structural invariants of F_eps; returns one dict per check."""
    reg = RegularizedPotential(PotentialParams(theta, theta0, gamma), eps)
    s = reg.seam
    out = []

    # seam agreement of value, first and second derivative between branches
    for sign in (1.0, -1.0):
        c = sign * s
        fin = flory_huggins(c, theta), flory_huggins_prime(c, theta), flory_huggins_second(c, theta)
        fout = (reg.f_s, sign * reg.f1_s, reg.f2_s)
        rel = max(abs(a - b) / max(abs(a), 1e-300) for a, b in zip(fin, fout) if a != 0.0)
        out.append(_check(f"seam C2 branch agreement at {sign * s:+.6g}", rel <= seam_tol,
                          f"max rel diff {rel:.3e}"))
        # Taylor remainder of the inner branch against the outer polynomial is O(delta^3)
        deltas = eps * np.array([0.2, 0.1, 0.05])
        rem = []
        for dl in deltas:
            x = s - dl
            taylor = reg.f_s + reg.f1_s * (-dl) + 0.5 * reg.f2_s * dl * dl
            rem.append(abs(flory_huggins(x, theta) - taylor))
        rem = np.array(rem)
        orders = np.log(rem[:-1] / rem[1:]) / np.log(deltas[:-1] / deltas[1:])
        out.append(_check(f"seam remainder order at {sign * s:+.6g}", np.min(orders) >= 2.5,
                          f"observed orders {np.array2string(orders, precision=3)}"))
        # one-sided limits across the seam
        lim = []
        for h in (1e-7, 1e-9):
            lo = np.array([reg.value(c - sign * h), reg.prime(c - sign * h), reg.second(c - sign * h)])
            hi = np.array([reg.value(c + sign * h), reg.prime(c + sign * h), reg.second(c + sign * h)])
            scale = np.maximum(np.abs(np.array(fin)), 1.0)
            lim.append(np.max(np.abs(hi - lo) / scale))
        out.append(_check(f"one-sided limits shrink at {sign * s:+.6g}", lim[1] <= lim[0] + 1e-15,
                          f"jumps {lim[0]:.2e} -> {lim[1]:.2e}"))

    x = envelope_samples(n_samples)
    fe = reg.value(x)
    ff = flory_huggins(x, theta)
    # rounding slack of a few ulps where both branches coincide to working precision
    slack = 8 * np.finfo(float).eps * np.maximum(np.abs(ff), 1.0)
    viol = np.max(fe - ff - slack)
    out.append(_check("envelope F_eps <= F", viol <= 0.0, f"max(F_eps - F) = {np.max(fe - ff):.3e}"))
    xs = x[np.abs(x) < 1.0]
    g1 = np.abs(reg.prime(xs))
    g2 = np.abs(flory_huggins_prime(xs, theta))
    viol = np.max(g1 - g2 - 8 * np.finfo(float).eps * np.maximum(g2, 1.0))
    out.append(_check("envelope |F_eps'| <= |F'|", viol <= 0.0,
                      f"max(|F_eps'| - |F'|) = {np.max(g1 - g2):.3e}"))

    wide = np.concatenate([x, np.linspace(-10.0, 10.0, 2001)])
    even = np.array_equal(reg.value(wide), reg.value(-wide))
    odd = np.array_equal(reg.prime(wide), -reg.prime(-wide))
    out.append(_check("F_eps even (exact)", even, "bitwise comparison"))
    out.append(_check("F_eps' odd (exact)", odd, "bitwise comparison"))
    grid = np.unique(wide)
    mono = bool(np.all(np.diff(reg.prime(grid)) > 0))
    out.append(_check("F_eps' strictly increasing", mono, f"{grid.size} sorted samples"))
    conv = bool(np.all(reg.second(wide) >= theta))
    out.append(_check("F_eps'' >= theta", conv, f"min F_eps'' = {np.min(reg.second(wide)):.6g}"))

    # finite-difference consistency away from the seams
    h = 1e-4
    fd_x = np.linspace(-3.0, 3.0, 6001)
    keep = np.abs(np.abs(fd_x) - s) > 2 * h
    fd_x = fd_x[keep]
    fd = (reg.value(fd_x + h) - reg.value(fd_x - h)) / (2 * h)
    err = np.abs(fd - reg.prime(fd_x))
    bound = h * h * np.maximum(reg.second(fd_x), 1.0) ** 2 * 10 + 1e-8
    out.append(_check("central differences match F_eps'", bool(np.all(err <= bound)),
                      f"max err {np.max(err):.2e}"))

    gbar = reg.f2_s
    cs = np.linspace(-10.0, 10.0, 4001)
    gp = g_eps_prime(cs, reg)
    out.append(_check("G_eps' <= Gbar (1 + |c|)", bool(np.all(gp <= gbar * (1.0 + np.abs(cs)))),
                      f"Gbar = F''(1-eps) = {gbar:.6g}"))
    return out
