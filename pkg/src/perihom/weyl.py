"""Orthogonal Weyl decomposition of edge vector fields on the torus.

Every field splits uniquely as ``mean + pot + sol`` where ``pot`` is a
lattice gradient and ``sol`` the lattice divergence of a skew matrix field.
The split is computed mode by mode: at a nonzero wavevector ``k`` the
Fourier coefficient is projected onto the gradient symbol
``g_j(k) = exp(2 pi i k_j / N) - 1``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .lattice import (ScalarField, SkewMatrixField, TorusGrid, VectorField, _grad,
                      _skew_div, norm)

ORTHO_TOL = 1e-12
ROUNDTRIP_TOL = 1e-10


class DecompositionError(ValueError):
    """Input is not (numerically) in the requested Weyl component."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


def _fft(values, grid):
    return np.fft.rfftn(values, axes=tuple(range(values.ndim - grid.d, values.ndim)))


def _ifft(values, grid):
    return np.fft.irfftn(values, s=grid.shape, axes=tuple(range(values.ndim - grid.d, values.ndim)))


def gradient_symbol(grid: TorusGrid):
    """Return ``(g, |g|^2)`` on the half-spectrum used by ``rfftn``."""
    N, d = grid.N, grid.d
    freqs = [np.fft.fftfreq(N)] * (d - 1) + [np.fft.rfftfreq(N)]
    theta = np.meshgrid(*[2 * np.pi * f for f in freqs], indexing="ij")
    g = np.stack([np.exp(1j * t) - 1.0 for t in theta])
    g2 = np.sum(np.abs(g) ** 2, axis=0)
    return g, g2


def _inv(g2):
    inv = np.zeros_like(g2)
    nz = g2 > 0
    inv[nz] = 1.0 / g2[nz]
    return inv


@dataclass(frozen=True)
class WeylSplit:
    mean: np.ndarray
    pot: VectorField
    sol: VectorField

    def reconstruct(self) -> VectorField:
        const = VectorField.constant(self.pot.grid, self.mean)
        return const + self.pot + self.sol


def _pot_hat(vhat, g, g2):
    dot = np.sum(np.conj(g) * vhat, axis=0)
    return g * (dot * _inv(g2))


def decompose(v: VectorField) -> WeylSplit:
    grid = v.grid
    g, g2 = gradient_symbol(grid)
    vhat = _fft(v.values, grid)
    zero_mode = (slice(None),) + (0,) * grid.d
    if grid.d == 1:
        # no zero-mean solenoidal fields on a circle
        phat = vhat.copy()
        phat[zero_mode] = 0.0
        shat = np.zeros_like(vhat)
    else:
        phat = _pot_hat(vhat, g, g2)
        shat = vhat - phat
        shat[zero_mode] = 0.0
    pot = VectorField(grid, _ifft(phat, grid))
    sol = VectorField(grid, _ifft(shat, grid))
    return WeylSplit(v.mean(), pot, sol)


def project_pot(v: VectorField) -> VectorField:
    return decompose(v).pot


def project_sol(v: VectorField) -> VectorField:
    return decompose(v).sol


def pot_potential(v_pot: VectorField, tol=ROUNDTRIP_TOL) -> ScalarField:
    """Zero-mean scalar ``f`` with ``grad f = v_pot`` (spectral Poisson solve)."""
    grid = v_pot.grid
    g, g2 = gradient_symbol(grid)
    vhat = _fft(v_pot.values, grid)
    fhat = np.sum(np.conj(g) * vhat, axis=0) * _inv(g2)
    f = _ifft(fhat, grid)
    scale = norm(v_pot)
    if scale > 0:
        resid = np.sqrt(np.sum((_grad(f) - v_pot.values) ** 2) / grid.size) / scale
        if resid > tol:
            raise DecompositionError("field has a non-potential component", resid)
    return ScalarField(grid, f)


def sol_stream(v_sol: VectorField, tol=ROUNDTRIP_TOL) -> SkewMatrixField:
    """Least-norm skew ``H`` with ``skew_div H = v_sol``.

    Mode by mode ``H_ij = (v_j g_i - v_i g_j) / |g|^2``; this is the
    component-wise Poisson-solve construction, antisymmetrised.
    """
    grid = v_sol.grid
    d = grid.d
    g, g2 = gradient_symbol(grid)
    vhat = _fft(v_sol.values, grid)
    inv = _inv(g2)
    H = np.zeros((d, d) + grid.shape)
    for i in range(d):
        for j in range(i + 1, d):
            h = _ifft((vhat[j] * g[i] - vhat[i] * g[j]) * inv, grid)
            H[i, j] = h
            H[j, i] = -h
    scale = norm(v_sol)
    if scale > 0:
        resid = np.sqrt(np.sum((_skew_div(H) - v_sol.values) ** 2) / grid.size) / scale
        if resid > tol:
            raise DecompositionError("field has a potential or mean component", resid)
    return SkewMatrixField(grid, H)


@dataclass(frozen=True)
class DefectPoint:
    N: int
    defect_abs: float
    defect_rel: float
    field_norm: float
    seed: int


def decomposition_defect(sampler, kind, seed, N_list):
    """Distance of the periodised field to its own Weyl component.

    ``sampler`` needs a ``d`` attribute and ``sample(seed, grid)`` returning
    a :class:`VectorField`.  ``kind`` is ``"pot"``, ``"sol"`` or ``"mean"``.
    """
    if kind not in ("pot", "sol", "mean"):
        raise ValueError(f"unknown defect kind {kind!r}")
    seed_id = int(getattr(seed, "key", seed))
    curve = []
    for N in N_list:
        grid = TorusGrid(sampler.d, int(N))
        xi = sampler.sample(seed, grid)
        split = decompose(xi)
        if kind == "pot":
            target = split.pot
        elif kind == "sol":
            target = split.sol
        else:
            target = VectorField.constant(grid, split.mean)
        defect = norm(xi - target)
        size = norm(xi)
        curve.append(DefectPoint(int(N), defect, defect / size if size > 0 else 0.0, size, seed_id))
    return curve


def write_defect_csv(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "defect_abs", "defect_rel", "field_norm", "seed"])
        for p in curve:
            w.writerow([p.N, repr(p.defect_abs), repr(p.defect_rel), repr(p.field_norm), p.seed])
