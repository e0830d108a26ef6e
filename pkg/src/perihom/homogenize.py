"""Effective conductivity tensors of periodised media.

Three cell problems are covered:

* discrete random-walk media (edge conductances ``xi_i(x)``), by the primal
  formula over potentials and the dual formula over stream matrices;
* a symmetric matrix field ``A(x)`` on the continuum torus, discretised with
  multilinear (Q1) finite elements;
* the divergence-free-flow operator ``div (a + E(x)) grad`` with constant
  ``a`` and skew ``E(x)``, posed on the lattice space of edge fields, plus
  the Norris least-squares functional over ``(f, H)``.
"""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import __version__
from .lattice import (MatrixField, ScalarField, TorusGrid, VectorField, _grad, _grad_adj,
                      _skew_div, _skew_div_adj)
from .solvers import (DEFAULT_TOL, SolveReport, SolverError, cg_solve, default_max_iter,
                      krylov_nonsym_solve, laplace_preconditioner, least_squares_minimize)
from .weyl import decompose

SYM_DIAGNOSTIC_TOL = 1e-8
CROSSCHECK_TOL = 1e-8


class AssemblyMismatch(RuntimeError):
    """Energy-form and flux-form tensors disagree."""


def medium_digest(obj) -> str:
    if obj is None:
        return ""
    return hashlib.sha256(repr(obj).encode()).hexdigest()[:16]


@dataclass
class EffectiveTensor:
    sigma: np.ndarray
    provenance: str
    d: int
    N: int
    medium: str = ""
    seed: Optional[int] = None
    reports: List[SolveReport] = field(default_factory=list)

    @property
    def sym(self) -> np.ndarray:
        return 0.5 * (self.sigma + self.sigma.T)

    @property
    def diffusivity(self) -> np.ndarray:
        """Effective diffusivity ``D = 2 sigma_sym``."""
        return 2.0 * self.sym

    @property
    def asymmetry(self) -> float:
        return float(np.abs(self.sigma - self.sigma.T).max())

    def sym_eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.sym)

    def as_record(self) -> dict:
        return {
            "d": self.d,
            "N": self.N,
            "medium": self.medium,
            "seed": self.seed,
            "provenance": self.provenance,
            "sigma": [float(x) for x in self.sigma.ravel()],
            "sigma_sym_eigenvalues": [float(x) for x in self.sym_eigenvalues()],
            "solver_reports": [r.as_dict() for r in self.reports],
            "version": __version__,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.as_record(), **kw)


@dataclass
class CellSolution:
    """Correctors ``f_k`` and fluxes for each unit direction ``e_k``."""

    correctors: List[ScalarField]
    fluxes: list
    energy_tensor: np.ndarray
    kind: str


def _raise_unconverged(report, what):
    if not report.converged:
        raise SolverError(f"{what}: solver stopped after {report.iterations} iterations "
                          f"with relative residual {report.residual:.3e}", report)


def _unit_field(grid, k):
    e = np.zeros((grid.d,) + grid.shape)
    e[k] = 1.0
    return e


# -- discrete random-walk media ----------------------------------------------

def _check_conductances(xi: VectorField):
    if np.any(xi.values <= 0):
        raise ValueError("conductances must be positive")


def sigma_primal_discrete(xi: VectorField, tol=DEFAULT_TOL, max_iter=None, precondition=True,
                          medium=None, seed=None):
    """``l.sigma l = inf_f N^-d sum_x sum_i xi_i(x) (l_i + grad_i f(x))^2``.

    Solves ``grad^*(xi (e_k + grad f_k)) = 0`` for each ``k``.
    """
    _check_conductances(xi)
    grid = xi.grid
    d = grid.d
    c = xi.values
    max_iter = max_iter or default_max_iter(grid.N)
    M = None
    if precondition:
        lap = laplace_preconditioner(grid.shape)
        scale = 1.0 / c.mean()
        M = lambda r: scale * lap(r)

    def apply(f):
        return _grad_adj(c * _grad(f))

    correctors, fluxes, grads, reports = [], [], [], []
    for k in range(d):
        b = -_grad_adj(c * _unit_field(grid, k))
        f, rep = cg_solve(apply, b, tol=tol, max_iter=max_iter, precond=M)
        _raise_unconverged(rep, f"primal cell problem, direction {k + 1}")
        g = _unit_field(grid, k) + _grad(f)
        grads.append(g)
        fluxes.append(VectorField(grid, c * g))
        correctors.append(ScalarField(grid, f))
        reports.append(rep)
    sigma = np.array([[np.sum(grads[j] * c * grads[k]) / grid.size for k in range(d)] for j in range(d)])
    tensor = EffectiveTensor(sigma, "primal", d, grid.N, medium_digest(medium), seed, reports)
    return tensor, CellSolution(correctors, fluxes, sigma, "discrete")


def _project_sol(v, grid):
    return decompose(VectorField(grid, v)).sol.values


def sigma_dual_discrete(xi: VectorField, tol=DEFAULT_TOL, max_iter=None, method="projected",
                        medium=None, seed=None):
    """Tensor with quadratic form ``l . sigma^-1 l``.

    ``l.sigma^-1 l = inf_H N^-d sum_x sum_i xi_i(x)^-1 (l_i + (div H)_i)^2``.
    ``method="projected"`` minimises over the solenoidal subspace directly;
    ``method="stream"`` parametrises it by skew matrices ``H``.
    """
    _check_conductances(xi)
    grid = xi.grid
    d = grid.d
    w = 1.0 / xi.values
    max_iter = max_iter or default_max_iter(grid.N)
    sols, reports = [], []
    if d == 1:
        sols = [np.zeros((1,) + grid.shape)]
    elif method == "projected":
        proj = lambda v: _project_sol(v, grid)

        def apply(s):
            return proj(w * s)

        for k in range(d):
            b = -proj(w * _unit_field(grid, k))
            s, rep = cg_solve(apply, b, tol=tol, max_iter=max_iter, project=proj)
            _raise_unconverged(rep, f"dual cell problem, direction {k + 1}")
            sols.append(s)
            reports.append(rep)
    elif method == "stream":
        for k in range(d):
            H, rep = _dual_stream_solve(w, grid, k, tol, max_iter)
            sols.append(_skew_div(H))
            reports.append(rep)
    else:
        raise ValueError(f"unknown dual method {method!r}")
    fields = [_unit_field(grid, k) + sols[k] for k in range(d)]
    inv = np.array([[np.sum(fields[j] * w * fields[k]) / grid.size for k in range(d)] for j in range(d)])
    return EffectiveTensor(inv, "dual", d, grid.N, medium_digest(medium), seed, reports)


def _pairs(d):
    return [(i, j) for i in range(d) for j in range(i + 1, d)]


def _h_from_pairs(h, d):
    H = np.zeros((d, d) + h.shape[1:])
    for p, (i, j) in enumerate(_pairs(d)):
        H[i, j] = h[p]
        H[j, i] = -h[p]
    return H


def _pairs_from_h(H):
    d = H.shape[0]
    return np.stack([H[i, j] for i, j in _pairs(d)])


def _dual_stream_solve(w, grid, k, tol, max_iter):
    d = grid.d
    lap = laplace_preconditioner(grid.shape)
    wmean = w.mean()

    def B(h):
        return _skew_div(_h_from_pairs(h, d))

    def Bt(v):
        return _pairs_from_h(_skew_div_adj(v))

    def precond(r):
        return np.stack([lap(x) for x in r]) / wmean

    target = -_unit_field(grid, k)
    h, _, rep = least_squares_minimize(B, Bt, target, lambda r: w * r, tol=tol,
                                       max_iter=max(max_iter, 2000), precond=precond)
    _raise_unconverged(rep, f"dual stream problem, direction {k + 1}")
    return _h_from_pairs(h, d), rep


# -- symmetric matrix field, Q1 finite elements ------------------------------

_GAUSS = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


class Q1Torus:
    """Matrix-free Q1 element operators on the periodic grid.

    Nodes are lattice sites; the cell with lower corner ``x`` carries the
    coefficient ``A(x)``.  Element integrals use 2-point Gauss rules per
    axis, which integrate the bilinear stiffness exactly for per-cell
    constant coefficients.
    """

    def __init__(self, grid: TorusGrid):
        self.grid = grid
        d = grid.d
        self.corners = list(itertools.product((0, 1), repeat=d))
        self.points = list(itertools.product(_GAUSS, repeat=d))
        self.weight = 1.0 / len(self.points)
        # dphi[q][c][i]: derivative of corner-c shape function along i at point q
        self.dphi = np.zeros((len(self.points), len(self.corners), d))
        for q, xq in enumerate(self.points):
            for ci, c in enumerate(self.corners):
                for i in range(d):
                    val = 1.0 if c[i] else -1.0
                    for j in range(d):
                        if j != i:
                            val *= xq[j] if c[j] else 1.0 - xq[j]
                    self.dphi[q, ci, i] = val

    def _shift(self, u, c):
        return np.roll(u, tuple(-s for s in c), axis=tuple(range(self.grid.d)))

    def grad(self, u):
        """Gradients at Gauss points, shape ``(Q, d) + grid``."""
        shifted = [self._shift(u, c) for c in self.corners]
        return np.einsum("qci,c...->qi...", self.dphi, np.stack(shifted))

    def grad_t(self, g):
        """Adjoint of :meth:`grad` under plain sums."""
        per_corner = np.einsum("qci,qi...->c...", self.dphi, g)
        out = np.zeros(self.grid.shape)
        axes = tuple(range(self.grid.d))
        for ci, c in enumerate(self.corners):
            out += np.roll(per_corner[ci], c, axis=axes)
        return out


def _check_elliptic(A: MatrixField):
    if not A.is_symmetric():
        raise ValueError("coefficient field must be symmetric")
    d = A.grid.d
    mats = np.moveaxis(A.values.reshape(d, d, -1), 2, 0)
    lam = np.linalg.eigvalsh(mats)
    if lam.min() <= 0:
        raise ValueError(f"non-elliptic cell detected (smallest eigenvalue {lam.min():.3e})")
    return lam


def sigma_primal_continuous(A: MatrixField, tol=DEFAULT_TOL, max_iter=None, medium=None, seed=None):
    """Q1 finite-element approximation of ``l.sigma(A^N) l = inf_f avg (l + grad f).A(l + grad f)``."""
    _check_elliptic(A)
    grid = A.grid
    d = grid.d
    fem = Q1Torus(grid)
    Av = A.values
    w = fem.weight
    max_iter = max_iter or default_max_iter(grid.N)
    lap = laplace_preconditioner(grid.shape)
    scale = d / np.trace(A.mean())
    precond = lambda r: scale * lap(r)

    def flux(g):
        return np.einsum("ij...,qj...->qi...", Av, g)

    def apply(u):
        return w * fem.grad_t(flux(fem.grad(u)))

    correctors, fluxes, grads, reports = [], [], [], []
    for k in range(d):
        e = np.zeros((len(fem.points), d) + grid.shape)
        e[:, k] = 1.0
        b = -w * fem.grad_t(flux(e))
        b -= b.mean()
        f, rep = cg_solve(apply, b, tol=tol, max_iter=max_iter, precond=precond)
        _raise_unconverged(rep, f"FEM cell problem, direction {k + 1}")
        g = e + fem.grad(f)
        grads.append(g)
        fluxes.append(flux(g))
        correctors.append(ScalarField(grid, f))
        reports.append(rep)
    sigma = np.array([[w * np.sum(grads[j] * fluxes[k]) / grid.size for k in range(d)] for j in range(d)])
    tensor = EffectiveTensor(sigma, "continuous", d, grid.N, medium_digest(medium), seed, reports)
    return tensor, CellSolution(correctors, fluxes, sigma, "continuous")


def edge_to_cell(xi: VectorField) -> MatrixField:
    """Diagonal cell coefficient from edge conductances.

    ``A_ii(cell x)`` is the mean of ``xi_i`` over the ``2^(d-1)`` edges of
    the cell with lower corner ``x`` that point along ``e_i``.
    """
    grid = xi.grid
    d = grid.d
    A = np.zeros((d, d) + grid.shape)
    axes = tuple(range(d))
    for i in range(d):
        acc = np.zeros(grid.shape)
        offsets = [c for c in itertools.product((0, 1), repeat=d) if c[i] == 0]
        for c in offsets:
            acc += np.roll(xi.values[i], tuple(-s for s in c), axis=axes)
        A[i, i] = acc / len(offsets)
    return MatrixField(grid, A)


# -- divergence-free flow: a + E(x) ------------------------------------------

def _apply_matrix(Mv, v):
    return np.einsum("ij...,j...->i...", Mv, v)


def _flow_matrix(a, E: MatrixField):
    d = E.grid.d
    a = np.asarray(a, dtype=float).reshape(d, d)
    if not np.allclose(a, a.T, atol=1e-14):
        raise ValueError("a must be symmetric")
    if np.linalg.eigvalsh(a).min() <= 0:
        raise ValueError("a must be positive definite")
    if not E.is_skew():
        raise ValueError("E must be skew-symmetric at every site")
    return a, a.reshape((d, d) + (1,) * d) + E.values


def sigma_nonsym(a, E: MatrixField, tol=DEFAULT_TOL, max_iter=None, medium=None, seed=None):
    """Effective conductivity of ``div (a + E) grad`` on the torus.

    ``sigma l = N^-d sum_x (a + E(x)) (l + grad psi_l)`` with ``psi_l``
    solving ``grad^*((a + E)(l + grad psi_l)) = 0``.  The returned tensor is
    non-symmetric; its ``diffusivity`` is ``2 sigma_sym``.
    """
    a, Mv = _flow_matrix(a, E)
    grid = E.grid
    d = grid.d
    max_iter = max_iter or default_max_iter(grid.N)
    lap = laplace_preconditioner(grid.shape)
    scale = d / np.trace(a)
    precond = lambda r: scale * lap(r)

    def apply(f):
        return _grad_adj(_apply_matrix(Mv, _grad(f)))

    correctors, fluxes, reports = [], [], []
    for k in range(d):
        b = -_grad_adj(_apply_matrix(Mv, _unit_field(grid, k)))
        f, rep = krylov_nonsym_solve(apply, b, tol=tol, max_iter=max_iter, precond=precond)
        _raise_unconverged(rep, f"flow cell problem, direction {k + 1}")
        J = _apply_matrix(Mv, _unit_field(grid, k) + _grad(f))
        correctors.append(ScalarField(grid, f))
        fluxes.append(VectorField(grid, J))
        reports.append(rep)
    sigma = np.stack([J.mean() for J in fluxes], axis=1)
    # energy form: l.sigma l = <l + grad psi, (a + E)(l + grad psi)>
    grads = [_unit_field(grid, k) + _grad(f.values) for k, f in enumerate(correctors)]
    energy = np.array([[np.sum(grads[j] * fluxes[k].values) / grid.size for k in range(d)] for j in range(d)])
    tensor = EffectiveTensor(sigma, "nonsym", d, grid.N, medium_digest(medium), seed, reports)
    return tensor, CellSolution(correctors, fluxes, energy, "nonsym")


def nonsym_diffusivity(a, solution: CellSolution) -> np.ndarray:
    """``l.D l = 2 l.a l + 2 N^-d sum |grad psi_l|_a^2``, polarised."""
    grads = [_grad(f.values) for f in solution.correctors]
    d = len(grads)
    a = np.asarray(a, dtype=float).reshape(d, d)
    n = solution.correctors[0].grid.size
    extra = np.array([[np.sum(grads[j] * _apply_matrix(a, grads[k])) / n for k in range(d)]
                      for j in range(d)])
    return 2.0 * a + 2.0 * extra


def nonsym_bounds(a, E: MatrixField):
    """``(a, a + N^-d sum_x E(x)^T a^-1 E(x))``, the PSD sandwich for ``sigma_sym``."""
    d = E.grid.d
    a = np.asarray(a, dtype=float).reshape(d, d)
    ainv = np.linalg.inv(a)
    Ev = E.values.reshape(d, d, -1)
    upper = a + np.einsum("kin,kl,ljn->ij", Ev, ainv, Ev) / E.grid.size
    return a, upper


def norris_value(a, E: MatrixField, xi, l, tol=1e-12, max_iter=5000, free_orthogonal=False):
    """Minimum of the Norris functional at finite N.

    ``inf_{f,H} N^-d sum_x |xi - div H - (a + E)(l - grad f)|^2_{a^-1}``,
    which equals ``|xi - sigma l|^2`` in the metric ``sigma_sym^-1``.
    With ``free_orthogonal`` the constant ``xi`` is also minimised over the
    hyperplane orthogonal to ``l`` (``xi`` is then ignored), giving
    ``l.sigma_sym l``.
    """
    a, Mv = _flow_matrix(a, E)
    grid = E.grid
    d = grid.d
    ainv = np.linalg.inv(a)
    xi = np.asarray(xi, dtype=float).reshape(d)
    l = np.asarray(l, dtype=float).reshape(d)
    P = len(_pairs(d))
    n_grid = 1 + P
    basis = np.zeros((0, d))
    if free_orthogonal:
        # orthonormal basis of l-perp
        q, _ = np.linalg.qr(np.column_stack([l] + [np.eye(d)[i] for i in range(d)]))
        basis = q[:, 1:d].T if np.linalg.norm(l) > 0 else np.eye(d)
        xi = np.zeros(d)
    m = basis.shape[0]
    n_field = n_grid * grid.size
    ones = np.ones(grid.shape)

    def unpack(u):
        g = u[:n_field].reshape((n_grid,) + grid.shape)
        return g[0], g[1:], u[n_field:]

    def B(u):
        f, h, coef = unpack(u)
        out = -_apply_matrix(Mv, _grad(f))
        if P:
            out = out + _skew_div(_h_from_pairs(h, d))
        for c, b in zip(coef, basis):
            out = out - c * b.reshape((d,) + (1,) * d) * ones
        return out

    MvT = Mv.swapaxes(0, 1)

    def Bt(v):
        parts = [-_grad_adj(_apply_matrix(MvT, v))[None]]
        if P:
            parts.append(_pairs_from_h(_skew_div_adj(v)))
        coef = [-np.sum(b.reshape((d,) + (1,) * d) * v) for b in basis]
        return np.concatenate([np.concatenate(parts).ravel(), np.asarray(coef, dtype=float)])

    lap = laplace_preconditioner(grid.shape)
    s_f = 1.0 / max(np.trace(np.einsum("ki,kl,lj->ij", a, ainv, a)) / d, 1e-300)
    s_h = 1.0 / max(2.0 * np.trace(ainv) / d, 1e-300)

    def precond(r):
        f, h, coef = unpack(r)
        parts = [s_f * lap(f)[None]] + ([s_h * np.stack([lap(x) for x in h])] if P else [])
        return np.concatenate([np.concatenate(parts).ravel(), coef / grid.size])

    target = (xi.reshape((d,) + (1,) * d) - _apply_matrix(Mv, l.reshape((d,) + (1,) * d))) * ones
    weight = lambda r: _apply_matrix(ainv.reshape((d, d) + (1,) * d), r)
    _, value, rep = least_squares_minimize(B, Bt, target, weight, x_shape=(n_field + m,), tol=tol,
                                           max_iter=max_iter, precond=precond, scale=1.0 / grid.size)
    _raise_unconverged(rep, "Norris functional")
    return value


def sigma_norris(a, E: MatrixField, tol=1e-12, medium=None, seed=None):
    """``sigma_sym`` assembled from the Norris functional alone.

    Diagonal entries are ``inf_{xi perp l, f, H}`` at ``l = e_i``; off-diagonal
    entries follow by polarisation with ``l = e_i + e_j``.
    """
    d = E.grid.d
    q = {}
    I = np.eye(d)
    zero = np.zeros(d)
    for i in range(d):
        q[i, i] = norris_value(a, E, zero, I[i], tol=tol, free_orthogonal=True)
    sig = np.diag([q[i, i] for i in range(d)])
    for i, j in _pairs(d):
        qij = norris_value(a, E, zero, I[i] + I[j], tol=tol, free_orthogonal=True)
        sig[i, j] = sig[j, i] = 0.5 * (qij - q[i, i] - q[j, j])
    return EffectiveTensor(sig, "norris", d, E.grid.N, medium_digest(medium), seed)


# -- cross-checks and bounds -------------------------------------------------

def sigma_from_energy_crosscheck(solution: CellSolution, coefficient, tol=CROSSCHECK_TOL):
    """Flux-average tensor ``sigma e_k = mean(coefficient (e_k + grad f_k))``.

    Recomputed from the correctors alone and compared with the energy-form
    tensor; disagreement beyond ``tol`` raises :class:`AssemblyMismatch`.
    """
    f0 = solution.correctors[0]
    grid = f0.grid
    d = grid.d
    cols = []
    for k, f in enumerate(solution.correctors):
        if solution.kind == "continuous":
            fem = Q1Torus(grid)
            e = np.zeros((len(fem.points), d) + grid.shape)
            e[:, k] = 1.0
            g = e + fem.grad(f.values)
            J = np.einsum("ij...,qj...->qi...", coefficient.values, g)
            cols.append(J.reshape(len(fem.points), d, -1).mean(axis=(0, 2)))
            continue
        g = _unit_field(grid, k) + _grad(f.values)
        if isinstance(coefficient, VectorField):
            J = coefficient.values * g
        else:
            J = _apply_matrix(coefficient.values, g)
        cols.append(J.reshape(d, -1).mean(axis=1))
    sigma = np.stack(cols, axis=1)
    ref = solution.energy_tensor
    gap = np.abs(sigma - ref).max() / max(np.abs(ref).max(), 1e-300)
    if gap > tol:
        raise AssemblyMismatch(f"flux-form and energy-form tensors differ by {gap:.3e} (relative)")
    return EffectiveTensor(sigma, "flux", d, grid.N)


def voigt_reuss(xi: VectorField):
    """Per-direction ``(harmonic mean, arithmetic mean)`` of the conductances."""
    d = xi.grid.d
    v = xi.values.reshape(d, -1)
    return 1.0 / np.mean(1.0 / v, axis=1), np.mean(v, axis=1)


def psd_slack(lower, upper) -> float:
    """Smallest eigenvalue of ``sym(upper - lower)``; >= 0 means ``lower <= upper``."""
    diff = np.asarray(upper) - np.asarray(lower)
    return float(np.linalg.eigvalsh(0.5 * (diff + diff.T)).min())


def symmetric_gauge_check(tensor: EffectiveTensor, tol=SYM_DIAGNOSTIC_TOL):
    """Asymmetry of a symmetric-medium tensor, surfaced rather than hidden."""
    return tensor.asymmetry <= tol * max(np.abs(tensor.sigma).max(), 1.0)
