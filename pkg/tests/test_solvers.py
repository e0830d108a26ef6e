import numpy as np
import pytest

from conftest import dense_grad
from perihom.lattice import _grad, _grad_adj, _laplacian
from perihom.media import IIDTwoPhase, Seed, sample_conductances
from perihom.lattice import TorusGrid
from perihom.solvers import (cg_solve, default_max_iter, fft_laplace_precond, krylov_nonsym_solve,
                             laplace_preconditioner, least_squares_minimize)


def test_cg_laplacian_1d_matches_dense():
    b = np.array([1.0, -1.0, 0.0, 0.0])
    b -= b.mean()
    x, rep = cg_solve(_laplacian, b)
    G = dense_grad(1, 4)
    ref = np.linalg.pinv(G.T @ G) @ b
    assert rep.converged and rep.residual <= 1e-10
    assert np.allclose(x, ref, atol=1e-10)


def test_cg_zero_rhs():
    x, rep = cg_solve(_laplacian, np.zeros((4, 4)))
    assert rep.iterations == 0 and np.all(x == 0)


def test_cg_rejects_nonzero_mean():
    with pytest.raises(ValueError):
        cg_solve(_laplacian, np.ones(5))


def _variable_operator(rng, shape):
    c = rng.uniform(0.25, 4.0, (len(shape),) + shape)
    return lambda f: _grad_adj(c * _grad(f))


def test_cg_energy_monotone_and_zero_mean(rng):
    A = _variable_operator(rng, (8, 8))
    b = rng.normal(size=(8, 8))
    b -= b.mean()
    x, rep = cg_solve(A, b, track_energy=True)
    hist = np.array(rep.history)
    assert np.all(np.diff(hist) <= 1e-12 * np.abs(hist).max())
    assert abs(x.mean()) <= 1e-13


def test_solution_independent_of_preconditioner_and_guess(rng):
    A = _variable_operator(rng, (6, 6, 6))
    b = rng.normal(size=(6, 6, 6))
    b -= b.mean()
    x1, _ = cg_solve(A, b)
    x2, _ = cg_solve(A, b, precond=fft_laplace_precond, x0=rng.normal(size=b.shape))
    assert np.abs(x1 - x2).max() <= 1e-8 * np.abs(x1).max()


def test_nonconvergence_reported_not_raised(rng):
    A = _variable_operator(rng, (16, 16))
    b = rng.normal(size=(16, 16))
    b -= b.mean()
    _, rep = cg_solve(A, b, max_iter=2)
    assert not rep.converged and rep.iterations == 2 and rep.residual > 1e-10


def test_default_max_iter():
    assert default_max_iter(32) == 1600


def test_precond_is_exact_inverse(rng):
    f = rng.normal(size=(5, 6, 7))
    f -= f.mean()
    assert np.abs(fft_laplace_precond(_laplacian(f)) - f).max() <= 1e-12
    assert np.all(fft_laplace_precond(np.zeros((4, 4))) == 0)
    assert laplace_preconditioner((4, 4)) is laplace_preconditioner((4, 4))


def test_preconditioning_reduces_iterations():
    g = TorusGrid(2, 32)
    c = sample_conductances(IIDTwoPhase(0.25, 4.0, 0.5), Seed(3), g).values
    A = lambda f: _grad_adj(c * _grad(f))
    b = -_grad_adj(c * np.stack([np.ones(g.shape), np.zeros(g.shape)]))
    _, plain = cg_solve(A, b)
    _, pre = cg_solve(A, b, precond=fft_laplace_precond)
    assert pre.converged and pre.iterations < plain.iterations


def _random_skew(rng, d, shape, bound=1.0):
    h = rng.uniform(-bound, bound, (d, d) + shape)
    return h - h.swapaxes(0, 1)


def test_gmres_matches_dense(rng):
    d, N = 2, 4
    E = _random_skew(rng, d, (N, N))
    a = np.eye(d)
    M = a.reshape(d, d, 1, 1) + E

    def A(f):
        return _grad_adj(np.einsum("ij...,j...->i...", M, _grad(f)))

    b = rng.normal(size=(N, N))
    b -= b.mean()
    x, rep = krylov_nonsym_solve(A, b)
    n = N * N
    Ad = np.column_stack([A(np.eye(n)[k].reshape(N, N)).ravel() for k in range(n)])
    ref = np.linalg.lstsq(Ad, b.ravel(), rcond=None)[0]
    ref -= ref.mean()
    assert rep.converged
    assert np.abs(x.ravel() - ref).max() <= 1e-8
    x0, rep0 = krylov_nonsym_solve(A, np.zeros((N, N)))
    assert np.all(x0 == 0) and rep0.iterations == 0


def test_gmres_agrees_with_cg_on_symmetric(rng):
    A = _variable_operator(rng, (8, 8))
    b = rng.normal(size=(8, 8))
    b -= b.mean()
    x1, _ = cg_solve(A, b, tol=1e-12)
    x2, rep = krylov_nonsym_solve(A, b, tol=1e-12, restart=10, precond=fft_laplace_precond)
    assert rep.converged
    assert np.abs(x1 - x2).max() <= 1e-9


def test_least_squares_matches_dense(rng):
    B = rng.normal(size=(30, 12))
    W = np.diag(rng.uniform(0.5, 2.0, 30))
    t = rng.normal(size=30)
    u, val, rep = least_squares_minimize(lambda x: B @ x, lambda y: B.T @ y, t, lambda r: W @ r, tol=1e-13)
    L = np.sqrt(W)
    ref = np.linalg.lstsq(L @ B, L @ t, rcond=None)[0]
    r = B @ ref - t
    assert rep.converged
    assert np.allclose(u, ref, atol=1e-9)
    assert val == pytest.approx(r @ W @ r, rel=1e-10)


def test_least_squares_identity_and_representable(rng):
    t = rng.normal(size=(3, 4))
    u, val, _ = least_squares_minimize(lambda x: x, lambda y: y, t, lambda r: r)
    assert np.allclose(u, t) and val <= 1e-20
    B = rng.normal(size=(20, 5))
    t = B @ rng.normal(size=5)
    _, val, _ = least_squares_minimize(lambda x: B @ x, lambda y: B.T @ y, t, lambda r: r, tol=1e-12)
    assert val <= 1e-20 * (t @ t) + 1e-24
