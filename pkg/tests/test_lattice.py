import numpy as np
import pytest

from conftest import dense_grad, dense_skew_div
from perihom.lattice import (MatrixField, ScalarField, SkewMatrixField, TorusGrid, VectorField,
                             grad, grad_adjoint, inner, laplacian, norm, shift, skew_div)


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGrid(0, 4)
    with pytest.raises(ValueError):
        TorusGrid(4, 4)
    with pytest.raises(ValueError):
        TorusGrid(2, 1)
    g = TorusGrid(3, 5)
    assert g.shape == (5, 5, 5) and g.size == 125
    assert g.coords().shape == (3, 5, 5, 5)


def test_field_shape_and_finiteness_checked():
    g = TorusGrid(2, 3)
    with pytest.raises(ValueError):
        VectorField(g, np.zeros((3, 3, 3)))
    with pytest.raises(ValueError):
        ScalarField(g, np.full((3, 3), np.nan))
    with pytest.raises(ValueError):
        SkewMatrixField(g, np.ones((2, 2, 3, 3)))


def test_fields_are_read_only():
    g = TorusGrid(2, 3)
    v = VectorField.zeros(g)
    with pytest.raises(ValueError):
        v.values[0, 0, 0] = 1.0


@pytest.mark.parametrize("d,N", [(1, 5), (2, 3), (2, 4), (3, 3)])
def test_grad_matches_dense(d, N, rng):
    g = TorusGrid(d, N)
    f = rng.normal(size=g.shape)
    assert np.allclose(grad(ScalarField(g, f)).values.ravel(), dense_grad(d, N) @ f.ravel(), atol=1e-14)


@pytest.mark.parametrize("d,N", [(1, 4), (2, 3), (2, 5), (3, 3)])
def test_grad_adjoint_identity(d, N, rng):
    g = TorusGrid(d, N)
    f = ScalarField(g, rng.normal(size=g.shape))
    v = VectorField(g, rng.normal(size=(d,) + g.shape))
    assert inner(grad(f), v) == pytest.approx(inner(f, grad_adjoint(v)), abs=1e-13)


@pytest.mark.parametrize("d,N", [(2, 3), (2, 4), (3, 3)])
def test_skew_div_matches_dense(d, N, rng):
    g = TorusGrid(d, N)
    h = rng.normal(size=(d, d) + g.shape)
    H = SkewMatrixField(g, h - h.swapaxes(0, 1))
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    flat = np.concatenate([H.values[i, j].ravel() for i, j in pairs])
    assert np.allclose(skew_div(H).values.ravel(), dense_skew_div(d, N) @ flat, atol=1e-13)


@pytest.mark.parametrize("d,N", [(2, 4), (3, 3), (3, 4)])
def test_skew_div_is_divergence_free_and_mean_zero(d, N, rng):
    g = TorusGrid(d, N)
    h = rng.normal(size=(d, d) + g.shape)
    v = skew_div(MatrixField(g, h - h.swapaxes(0, 1)))
    assert np.abs(grad_adjoint(v).values).max() < 1e-13
    assert np.abs(v.mean()).max() < 1e-14


def test_skew_div_rejects_nonskew():
    g = TorusGrid(2, 3)
    with pytest.raises(ValueError):
        skew_div(MatrixField(g, np.ones((2, 2, 3, 3))))


def test_laplacian_is_grad_adjoint_grad(rng):
    g = TorusGrid(3, 4)
    f = ScalarField(g, rng.normal(size=g.shape))
    assert np.allclose(laplacian(f).values, grad_adjoint(grad(f)).values)


def test_inner_norm_normalisation():
    g = TorusGrid(2, 4)
    v = VectorField.constant(g, [3.0, 4.0])
    assert norm(v) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        inner(v, VectorField.zeros(TorusGrid(2, 3)))


def test_shift_commutes_with_grad(rng):
    g = TorusGrid(2, 5)
    f = ScalarField(g, rng.normal(size=g.shape))
    assert np.allclose(grad(shift(f, (2, -1))).values, shift(grad(f), (2, -1)).values)
    assert shift(f, (1, 0)).values[1, 0] == f.values[0, 0]


def test_vector_field_arithmetic():
    g = TorusGrid(1, 3)
    a = VectorField.constant(g, [1.0])
    b = a + a * 2.0 - a
    assert np.allclose(b.values, 2.0)
    assert np.allclose(b.mean(), [2.0])
