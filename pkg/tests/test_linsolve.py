import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from nsch.grid import Grid
from nsch.linsolve import (NewtonConfig, NonConvergenceError, SolveStats, SparseOperator, bicgstab,
                           newton_solve)
from nsch.potential import PotentialParams, RegularizedPotential


def test_identity_one_iteration():
    b = np.arange(5.0)
    stats = SolveStats()
    x = bicgstab(SparseOperator(sp.identity(5, format="csr")), b, stats=stats)
    assert np.allclose(x, b) and stats.iterations <= 1


def test_shifted_laplacian(rng):
    g = Grid((200,), (1.0,))
    A = sp.identity(200) - g.laplacian_matrix
    b = rng.normal(size=200)
    x = bicgstab(SparseOperator(A), b, tol=1e-12, max_iter=2000)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_singular_incompatible_rhs_fails():
    g = Grid((30,), (1.0,))
    b = np.ones(30)
    with pytest.raises(NonConvergenceError):
        bicgstab(SparseOperator(g.laplacian_matrix), b, tol=1e-12, max_iter=300)


def test_from_rows():
    op = SparseOperator.from_rows(2, [[(0, 2.0)], [(0, 1.0), (1, 4.0)]])
    assert np.allclose(op.matvec(np.array([1.0, 1.0])), [2.0, 5.0])
    assert np.allclose(op.diagonal(), [2.0, 4.0])


def test_newton_linear_residual_one_step():
    res = newton_solve(lambda x: x - 3.0, lambda x: np.eye(1), np.array([0.0]))
    assert res.iterations == 1 and res.x[0] == pytest.approx(3.0)


def _bisect(f, lo, hi, tol=1e-14):
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


@pytest.mark.parametrize("x0", [0.0, 25.0, -40.0])
def test_newton_regularized_scalar(x0):
    reg = RegularizedPotential(PotentialParams(1.0, 2.0, 2.0), 0.1)
    f = lambda x: reg.prime(x) + x - 2.0
    res = newton_solve(lambda x: f(x), lambda x: np.atleast_2d(reg.second(x) + 1.0), np.array([x0]),
                       NewtonConfig(abs_tol=1e-12, rel_tol=1e-300))
    assert abs(f(res.x[0])) <= 1e-10
    assert res.x[0] == pytest.approx(_bisect(f, -50, 50), abs=1e-10)


def test_newton_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(abs_tol=0)
    with pytest.raises(ValueError):
        NewtonConfig(max_iter=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(5, 60), st.floats(0.01, 10.0), st.integers(0, 10_000))
def test_bicgstab_residual_certified(n, shift, seed):
    g = Grid((n,), (1.0,))
    A = shift * sp.identity(n) - g.laplacian_matrix
    b = np.random.default_rng(seed).normal(size=n)
    x = bicgstab(A, b, tol=1e-11, max_iter=20 * n)
    assert np.linalg.norm(A @ x - b) <= 1e-11 * np.linalg.norm(b) * 1.0001
