"""Sparse operators, preconditioned BiCGStab and a damped Newton iteration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp


class NonConvergenceError(RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int, x=None):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations
        self.x = x


class SparseOperator:
    """Square sparse matrix in compressed-row form.

    Storage is delegated to ``scipy.sparse.csr_matrix``; construction
    canonicalizes the structure (sorted, deduplicated column indices) and
    rejects non-finite coefficients.
    """

    def __init__(self, matrix):
        m = sp.csr_matrix(matrix, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got {m.shape}")
        m.sum_duplicates()
        m.sort_indices()
        if not np.all(np.isfinite(m.data)):
            raise ValueError("operator has non-finite coefficients")
        self.matrix = m

    @classmethod
    def from_rows(cls, n: int, rows: list[list[tuple[int, float]]]) -> "SparseOperator":
        indptr = [0]
        indices = []
        data = []
        for row in rows:
            for j, v in row:
                if not 0 <= j < n:
                    raise ValueError(f"column index {j} out of range for n={n}")
                indices.append(j)
                data.append(v)
            indptr.append(len(indices))
        if len(rows) != n:
            raise ValueError("need exactly n rows")
        return cls(sp.csr_matrix((data, indices, indptr), shape=(n, n)))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    __matmul__ = matvec

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()


@dataclass
class SolveStats:
    iterations: int = 0
    residual: float = 0.0


def bicgstab(A, b: np.ndarray, x0: np.ndarray | None = None, tol: float = 1e-10,
             max_iter: int = 1000, precond: Callable[[np.ndarray], np.ndarray] | None = None,
             atol: float = 0.0, stats: SolveStats | None = None) -> np.ndarray:
    """Right-preconditioned BiCGStab (van der Vorst).

    Parameters
    ----------
    A : SparseOperator, sparse matrix or callable
        The system operator.
    b : ndarray
        Right-hand side.
    tol : float
        Relative tolerance; convergence means ``||b - A x|| <= max(tol ||b||, atol)``
        with the residual recomputed from scratch.
    precond : callable, optional
        Approximate inverse of ``A``. Defaults to Jacobi scaling when ``A``
        exposes a diagonal.

    Raises
    ------
    NonConvergenceError
        On breakdown or when ``max_iter`` is exhausted.
    """
    if isinstance(A, SparseOperator):
        matvec = A.matvec
        diag = A.diagonal()
    elif sp.issparse(A):
        matvec = lambda v: A @ v
        diag = A.diagonal()
    else:
        matvec = A
        diag = None
    if precond is None:
        if diag is not None and np.all(diag != 0):
            inv = 1.0 / diag
            precond = lambda v: inv * v
        else:
            precond = lambda v: v

    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    target = max(tol * bnorm, atol)
    if bnorm == 0.0 and atol == 0.0:
        if stats is not None:
            stats.iterations, stats.residual = 0, 0.0
        return np.zeros_like(b)

    r = b - matvec(x)
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        if stats is not None:
            stats.iterations, stats.residual = 0, rnorm
        return x
    r_hat = r.copy()
    rho_old = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    tiny = np.finfo(float).tiny
    for it in range(1, max_iter + 1):
        rho = float(r_hat @ r)
        if abs(rho) <= tiny * bnorm:
            break
        beta = (rho / rho_old) * (alpha / omega)
        p = r + beta * (p - omega * v)
        p_hat = precond(p)
        v = matvec(p_hat)
        denom = float(r_hat @ v)
        if denom == 0.0:
            break
        alpha = rho / denom
        s = r - alpha * v
        if np.linalg.norm(s) <= target:
            x = x + alpha * p_hat
            true_res = np.linalg.norm(b - matvec(x))
            if true_res <= target:
                if stats is not None:
                    stats.iterations, stats.residual = it, true_res
                return x
            r = b - matvec(x)
            rho_old = rho
            continue
        s_hat = precond(s)
        t = matvec(s_hat)
        tt = float(t @ t)
        if tt == 0.0:
            break
        omega = float(t @ s) / tt
        x = x + alpha * p_hat + omega * s_hat
        r = s - omega * t
        if np.linalg.norm(r) <= target:
            true_res = np.linalg.norm(b - matvec(x))
            if true_res <= target:
                if stats is not None:
                    stats.iterations, stats.residual = it, true_res
                return x
            r = b - matvec(x)
        if omega == 0.0:
            break
        rho_old = rho
    final = float(np.linalg.norm(b - matvec(x)))
    raise NonConvergenceError("bicgstab did not converge", final / max(bnorm, tiny), it, x)


# ----------------------------------------------------------------------
# Newton

@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    max_iter: int = 50
    damping: float = 1.0
    shrink: float = 0.5
    max_backtracks: int = 30

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("Newton tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")
        if not (0 < self.shrink < 1):
            raise ValueError("line-search shrink must lie in (0, 1)")


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual: float
    linear_iterations: int


def default_linear_solve(J, rhs):
    """Solve ``J d = rhs`` for a dense or sparse Jacobian."""
    if sp.issparse(J) or isinstance(J, SparseOperator):
        stats = SolveStats()
        n = J.n if isinstance(J, SparseOperator) else J.shape[0]
        d = bicgstab(J, rhs, tol=1e-13, max_iter=10 * n + 10, stats=stats)
        return d, stats.iterations
    J = np.atleast_2d(np.asarray(J, dtype=float))
    return np.linalg.solve(J, np.atleast_1d(rhs)).reshape(np.shape(rhs)), 0


def newton_solve(residual_fn: Callable[[np.ndarray], np.ndarray],
                 jacobian_fn: Callable[[np.ndarray], object],
                 x0, cfg: NewtonConfig = NewtonConfig(),
                 linear_solve: Callable | None = None) -> NewtonResult:
    """Damped Newton iteration with backtracking on the max-norm residual.

    ``jacobian_fn(x)`` returns the Jacobian in any form accepted by
    ``linear_solve(J, rhs) -> (d, iterations)``; the default handles dense
    arrays and sparse matrices. Convergence is declared when
    ``||R(x)||_inf <= abs_tol`` or ``||R(x)||_inf <= rel_tol * ||R(x0)||_inf``.
    A full step is tried first; damping only kicks in if it fails to reduce
    the residual.
    """
    solve = default_linear_solve if linear_solve is None else linear_solve
    x = np.array(x0, dtype=float)
    r = np.asarray(residual_fn(x), dtype=float)
    rn = _inf_norm(r)
    r0 = rn
    lin_total = 0
    if not np.isfinite(rn):
        raise NonConvergenceError("non-finite initial residual", rn, 0, x)
    for it in range(cfg.max_iter + 1):
        if rn <= cfg.abs_tol or (it > 0 and rn <= cfg.rel_tol * r0):
            return NewtonResult(x, it, rn, lin_total)
        if it == cfg.max_iter:
            break
        d, nlin = solve(jacobian_fn(x), -r)
        lin_total += nlin
        step = cfg.damping
        for _ in range(cfg.max_backtracks + 1):
            x_try = x + step * d
            r_try = np.asarray(residual_fn(x_try), dtype=float)
            rn_try = _inf_norm(r_try)
            if np.isfinite(rn_try) and rn_try < rn:
                break
            step *= cfg.shrink
        if not np.isfinite(rn_try):
            raise NonConvergenceError("non-finite residual in line search", rn_try, it + 1, x)
        x, r, rn = x_try, r_try, rn_try
    raise NonConvergenceError("newton did not converge", rn, cfg.max_iter, x)


def _inf_norm(v) -> float:
    v = np.asarray(v)
    return float(np.max(np.abs(v))) if v.size else 0.0
