"""Dense reference operators built site by site, independent of the FFT and np.roll code paths."""
import itertools

import numpy as np
import pytest


def sites(d, N):
    return list(itertools.product(range(N), repeat=d))


def site_index(x, N):
    idx = 0
    for c in x:
        idx = idx * N + (c % N)
    return idx


def dense_grad(d, N):
    """Rows: (direction i, site x) in component-major order; columns: sites."""
    n = N ** d
    G = np.zeros((d * n, n))
    for x in sites(d, N):
        ix = site_index(x, N)
        for i in range(d):
            y = list(x)
            y[i] += 1
            G[i * n + ix, site_index(y, N)] += 1.0
            G[i * n + ix, ix] -= 1.0
    return G


def dense_skew_div(d, N):
    """Map from upper-triangle stream values h_ij (i<j) to edge fields.

    ``(div H)_i(x) = sum_j H_ij(x) - H_ij(x - e_j)`` with ``H_ji = -H_ij``.
    """
    n = N ** d
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    D = np.zeros((d * n, len(pairs) * n))
    for p, (i, j) in enumerate(pairs):
        for x in sites(d, N):
            ix = site_index(x, N)
            back_j = list(x)
            back_j[j] -= 1
            back_i = list(x)
            back_i[i] -= 1
            # component i receives +H_ij(x) - H_ij(x - e_j)
            D[i * n + ix, p * n + ix] += 1.0
            D[i * n + ix, p * n + site_index(back_j, N)] -= 1.0
            # component j receives H_ji = -H_ij: -H_ij(x) + H_ij(x - e_i)
            D[j * n + ix, p * n + ix] -= 1.0
            D[j * n + ix, p * n + site_index(back_i, N)] += 1.0
    return D


def range_projector(M, rcond=1e-10):
    if M.shape[1] == 0:
        return np.zeros((M.shape[0], M.shape[0]))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    U = U[:, s > rcond * max(s.max(), 1.0)]
    return U @ U.T


def dense_sigma_primal(xi):
    """Dense minimisation of the primal quadratic form; ``xi`` has shape (d, N, ..., N)."""
    d, N = xi.shape[0], xi.shape[1]
    n = N ** d
    G = dense_grad(d, N)
    W = np.diag(xi.reshape(-1))
    K = G.T @ W @ G
    sig = np.zeros((d, d))
    grads = []
    for k in range(d):
        e = np.zeros(d * n)
        e[k * n:(k + 1) * n] = 1.0
        f = np.linalg.lstsq(K, -G.T @ W @ e, rcond=None)[0]
        grads.append(e + G @ f)
    for j in range(d):
        for k in range(d):
            sig[j, k] = grads[j] @ W @ grads[k] / n
    return sig


def dense_sigma_nonsym(a, E):
    """Dense solve of ``G^T M (e_k + G f) = 0`` with ``M(x) = a + E(x)``; returns ``sigma``."""
    d, N = E.shape[0], E.shape[2]
    n = N ** d
    G = dense_grad(d, N)
    M = np.zeros((d * n, d * n))
    Ef = E.reshape(d, d, n)
    for i in range(d):
        for j in range(d):
            M[i * n:(i + 1) * n, j * n:(j + 1) * n] = np.diag(a[i, j] + Ef[i, j])
    K = G.T @ M @ G
    sig = np.zeros((d, d))
    for k in range(d):
        e = np.zeros(d * n)
        e[k * n:(k + 1) * n] = 1.0
        f = np.linalg.lstsq(K, -G.T @ M @ e, rcond=None)[0]
        J = M @ (e + G @ f)
        sig[:, k] = J.reshape(d, n).mean(axis=1)
    return sig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
