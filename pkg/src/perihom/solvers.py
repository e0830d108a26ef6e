"""Krylov solvers for the periodic cell problems.

All solvers act on plain numpy arrays of any shape.  Problems posed on the
torus have the constants in their kernel, so iterates are re-projected onto
the zero-mean subspace every step.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    wall_time: float
    tol: float = DEFAULT_TOL
    history: list = field(default_factory=list, repr=False)

    def as_dict(self):
        return {"iterations": self.iterations, "residual": self.residual,
                "converged": self.converged, "wall_time": self.wall_time}


def default_max_iter(N):
    return 50 * int(N)


def _zero_mean(x):
    return x - x.mean()


def _check_zero_mean(b, what="right-hand side"):
    scale = max(np.abs(b).max(), 1e-300)
    if abs(b.mean()) > 1e-12 * scale:
        raise ValueError(f"{what} must have zero mean (mean = {b.mean():.3e})")


class _LaplacePrecond:
    def __init__(self, shape):
        freqs = [np.fft.fftfreq(n) for n in shape[:-1]] + [np.fft.rfftfreq(shape[-1])]
        theta = np.meshgrid(*[2 * np.pi * q for q in freqs], indexing="ij")
        sym = sum(2.0 - 2.0 * np.cos(t) for t in theta)
        sym.flat[0] = np.inf
        self.inv = 1.0 / sym
        self.shape = tuple(shape)
        self.axes = tuple(range(len(shape)))

    def __call__(self, f):
        return np.fft.irfftn(np.fft.rfftn(f) * self.inv, s=self.shape, axes=self.axes)


@lru_cache(maxsize=32)
def laplace_preconditioner(shape) -> _LaplacePrecond:
    """Cached inverse Laplacian for grids of the given shape."""
    return _LaplacePrecond(tuple(shape))


def fft_laplace_precond(f: np.ndarray) -> np.ndarray:
    """Exact inverse of the unit-conductance lattice Laplacian; the zero mode is annihilated."""
    f = np.asarray(f, dtype=float)
    return laplace_preconditioner(f.shape)(f)


def cg_solve(apply_A, b, tol=DEFAULT_TOL, max_iter=None, precond=None, x0=None,
             track_energy=False, project=None):
    """Preconditioned conjugate gradients on the zero-mean subspace.

    ``project`` replaces the zero-mean projection by another orthogonal
    projection whose range contains ``b``.  Returns ``(x, report)``;
    non-convergence is reported, not raised.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    _check_zero_mean(b)
    proj = project if project is not None else _zero_mean
    if max_iter is None:
        max_iter = default_max_iter(b.shape[-1])
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else proj(np.asarray(x0, dtype=float))
    history = []
    if bnorm == 0:
        return np.zeros_like(b), SolveReport(0, 0.0, True, time.perf_counter() - t0, tol, history)
    M = precond if precond is not None else (lambda r: r)
    r = b - apply_A(x)
    r = proj(r)
    z = proj(M(r))
    p = z.copy()
    rz = np.vdot(r, z)
    res = np.linalg.norm(r) / bnorm
    it = 0
    if track_energy:
        history.append(0.5 * np.vdot(x, apply_A(x)) - np.vdot(b, x))
    while res > tol and it < max_iter:
        Ap = apply_A(p)
        alpha = rz / np.vdot(p, Ap)
        x = proj(x + alpha * p)
        r = proj(r - alpha * Ap)
        res = np.linalg.norm(r) / bnorm
        it += 1
        if track_energy:
            history.append(0.5 * np.vdot(x, apply_A(x)) - np.vdot(b, x))
        if res <= tol:
            break
        z = proj(M(r))
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    # recompute the true residual so the report cannot drift from reality
    true_res = np.linalg.norm(proj(b - apply_A(x))) / bnorm
    report = SolveReport(it, float(true_res), bool(true_res <= tol), time.perf_counter() - t0, tol, history)
    return x, report


def krylov_nonsym_solve(apply_A, b, tol=DEFAULT_TOL, max_iter=None, precond=None, x0=None,
                        restart=60):
    """Restarted, right-preconditioned GMRES on the zero-mean subspace."""
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    _check_zero_mean(b)
    shape = b.shape
    if max_iter is None:
        max_iter = default_max_iter(shape[-1])
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), SolveReport(0, 0.0, True, time.perf_counter() - t0, tol)
    M = precond if precond is not None else (lambda r: r)
    x = np.zeros(b.size) if x0 is None else _zero_mean(np.asarray(x0, dtype=float)).ravel()

    def A(v):
        return _zero_mean(apply_A(v.reshape(shape))).ravel()

    def P(v):
        return _zero_mean(M(v.reshape(shape))).ravel()

    total = 0
    bflat = b.ravel()
    res = np.linalg.norm(bflat - A(x)) / bnorm
    while res > tol and total < max_iter:
        r = bflat - A(x)
        beta = np.linalg.norm(r)
        m = min(restart, max_iter - total)
        V = np.zeros((m + 1, b.size))
        Z = np.zeros((m, b.size))
        Hm = np.zeros((m + 1, m))
        V[0] = r / beta
        cs, sn = np.zeros(m), np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        k_used = 0
        for k in range(m):
            Z[k] = P(V[k])
            w = A(Z[k])
            for j in range(k + 1):  # modified Gram-Schmidt, twice for stability
                h = np.dot(V[j], w)
                Hm[j, k] += h
                w -= h * V[j]
            for j in range(k + 1):
                h = np.dot(V[j], w)
                Hm[j, k] += h
                w -= h * V[j]
            Hm[k + 1, k] = np.linalg.norm(w)
            if Hm[k + 1, k] > 0:
                V[k + 1] = w / Hm[k + 1, k]
            for j in range(k):
                a, c = Hm[j, k], Hm[j + 1, k]
                Hm[j, k] = cs[j] * a + sn[j] * c
                Hm[j + 1, k] = -sn[j] * a + cs[j] * c
            denom = np.hypot(Hm[k, k], Hm[k + 1, k])
            cs[k], sn[k] = Hm[k, k] / denom, Hm[k + 1, k] / denom
            Hm[k, k] = denom
            Hm[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            k_used = k + 1
            total += 1
            if abs(g[k + 1]) / bnorm <= tol * 0.5 or Hm[k, k] == 0:
                break
        y = np.linalg.solve(np.triu(Hm[:k_used, :k_used]), g[:k_used])
        x = _zero_mean(x + Z[:k_used].T @ y)
        res = np.linalg.norm(bflat - A(x)) / bnorm
    report = SolveReport(total, float(res), bool(res <= tol), time.perf_counter() - t0, tol)
    return x.reshape(shape), report


def least_squares_minimize(apply_B, apply_Bt, target, weight, x_shape=None, tol=DEFAULT_TOL,
                           max_iter=2000, precond=None, scale=1.0):
    """Minimise ``|B u - target|^2_W`` by conjugate gradients on the normal equations.

    ``weight(r)`` applies the pointwise metric ``W`` to a residual array;
    ``apply_Bt`` is the adjoint of ``apply_B`` under plain Euclidean sums.
    Returns ``(u, value, report)`` with ``value = scale * <B u - t, W (B u - t)>``.
    """
    t0 = time.perf_counter()
    target = np.asarray(target, dtype=float)
    rhs = apply_Bt(weight(target))
    if x_shape is None:
        x_shape = rhs.shape
    M = precond if precond is not None else (lambda r: r)

    def normal(u):
        return apply_Bt(weight(apply_B(u)))

    u = np.zeros(x_shape)
    bnorm = np.linalg.norm(rhs)
    it = 0
    if bnorm > 0:
        r = rhs.copy()
        z = M(r)
        p = z.copy()
        rz = np.vdot(r, z)
        res = 1.0
        while it < max_iter:
            Ap = normal(p)
            pAp = np.vdot(p, Ap)
            if pAp <= 0:
                break
            alpha = rz / pAp
            u = u + alpha * p
            r = r - alpha * Ap
            it += 1
            res = np.linalg.norm(r) / bnorm
            if res <= tol:
                break
            z = M(r)
            rz_new = np.vdot(r, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        res = np.linalg.norm(rhs - normal(u)) / bnorm
    else:
        res = 0.0
    resid = apply_B(u) - target
    value = scale * float(np.vdot(resid, weight(resid)))
    report = SolveReport(it, float(res), bool(res <= tol), time.perf_counter() - t0, tol)
    return u, value, report

