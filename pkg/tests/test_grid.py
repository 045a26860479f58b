import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nsch.grid import (Grid, GridMismatchError, ScalarField, VectorField, divergence, gradient,
                       inner_cells, inner_faces, laplacian_neumann)


def grid1(n=16, L=1.0):
    return Grid((n,), (L,))


def test_rejects_bad_grids():
    with pytest.raises(ValueError):
        Grid((0,), (1.0,))
    with pytest.raises(ValueError):
        Grid((4,), (-1.0,))
    with pytest.raises(ValueError):
        Grid((4, 4, 4), (1.0, 1.0, 1.0))


def test_gradient_of_constant_is_zero():
    g = Grid((8, 5), (2.0, 1.0))
    v = gradient(ScalarField(g, np.full(g.cells, 3.7)))
    assert all(np.all(c == 0) for c in v.components)


def test_gradient_exact_on_linear():
    g = grid1(16)
    x = g.cell_centers()[0]
    gx = g.grad(x)[0]
    assert np.allclose(gx[1:-1], 1.0, atol=1e-13)
    assert gx[0] == 0 and gx[-1] == 0


def test_gradient_of_quadratic_matches_2x_on_interior_faces():
    g = grid1(16)
    x = g.cell_centers()[0]
    xf = g.face_centers(0)[0]
    gx = g.grad(x ** 2)[0]
    assert np.allclose(gx[1:-1], 2 * xf[1:-1], rtol=0, atol=1e-13)


def test_divergence_of_linear_face_field():
    g = grid1(10, 3.0)
    xf = g.face_centers(0)[0]
    assert np.allclose(g.div((xf,)), 1.0, atol=1e-13)


def test_laplacian_cosine_second_order():
    errs = []
    for n in (32, 64, 128):
        L = 2.0
        g = grid1(n, L)
        x = g.cell_centers()[0]
        f = np.cos(np.pi * x / L)
        errs.append(np.max(np.abs(g.lap(f) + (np.pi / L) ** 2 * f)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9)


def test_dct_eigenvalues_match_dense_spectrum():
    g = Grid((6, 5), (1.5, 1.0))
    dense = np.sort(np.linalg.eigvalsh(g.laplacian_matrix.toarray()))
    assert np.allclose(np.sort(g.laplacian_eigenvalues.ravel()), dense, atol=1e-10)


def test_matrix_and_array_operators_agree(rng):
    g = Grid((7, 4), (1.0, 2.0))
    f = rng.normal(size=g.cells)
    lap = (g.laplacian_matrix @ f.ravel()).reshape(g.cells)
    assert np.allclose(lap, g.lap(f), atol=1e-12)


def test_mismatched_grids_rejected():
    a, b = grid1(8), grid1(9)
    with pytest.raises(GridMismatchError):
        gradient(ScalarField(a, np.zeros(8)), b)
    with pytest.raises(ValueError):
        ScalarField(a, np.zeros(9))


def test_vector_field_shapes():
    g = Grid((3, 4), (1.0, 1.0))
    v = VectorField.zeros(g)
    assert v.components[0].shape == (4, 4) and v.components[1].shape == (3, 5)


dims = st.sampled_from([(5,), (12,), (4, 3), (6, 7)])


@st.composite
def grid_and_fields(draw):
    cells = draw(dims)
    lengths = tuple(draw(st.floats(0.5, 4.0)) for _ in cells)
    g = Grid(cells, lengths)
    el = st.floats(-10, 10, allow_nan=False)
    f = draw(arrays(float, g.cells, elements=el))
    v = tuple(draw(arrays(float, g.face_shape(k), elements=el)) for k in range(g.dim))
    # no-flux boundary faces
    v = tuple(np.where(g.interior_face_mask(k), c, 0.0) for k, c in enumerate(v))
    return g, f, v


@settings(max_examples=60, deadline=None)
@given(grid_and_fields())
def test_summation_by_parts(data):
    g, f, v = data
    lhs = inner_faces(gradient(ScalarField(g, f)), VectorField(g, v))
    rhs = -inner_cells(ScalarField(g, f), divergence(VectorField(g, v)))
    scale = 1.0 + np.sum(np.abs(f)) * sum(np.sum(np.abs(c)) for c in v)
    assert abs(lhs - rhs) <= 1e-12 * scale


@settings(max_examples=60, deadline=None)
@given(grid_and_fields())
def test_neumann_laplacian_integrates_to_zero(data):
    g, f, _ = data
    lap = laplacian_neumann(ScalarField(g, f)).values
    assert abs(g.integrate(lap)) <= 1e-10 * (1 + np.max(np.abs(f))) * g.volume / min(g.spacing) ** 2


@settings(max_examples=60, deadline=None)
@given(grid_and_fields())
def test_divergence_theorem_with_walls(data):
    g, _, v = data
    assert abs(g.integrate(g.div(v))) <= 1e-10 * (1 + sum(np.sum(np.abs(c)) for c in v))
