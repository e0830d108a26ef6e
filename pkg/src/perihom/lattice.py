"""Torus grids, field containers and discrete differential operators.

Vector fields are edge based: component ``i`` at site ``x`` lives on the
directed edge ``x -> x + e_i``.  All inner products carry the ``N**-d``
normalisation so energies are intensive.

Arrays are stored component-major: a vector field on a ``d``-dimensional
grid of side ``N`` has shape ``(d, N, ..., N)``, a matrix field
``(d, d, N, ..., N)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

SKEW_ATOL = 1e-12


@dataclass(frozen=True)
class TorusGrid:
    """The discrete torus ``Z^d / N Z^d``."""

    d: int
    N: int

    def __post_init__(self):
        if not 1 <= self.d <= 3:
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.N < 2:
            raise ValueError(f"side length must be >= 2, got {self.N}")

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def size(self) -> int:
        return self.N ** self.d

    def coords(self) -> np.ndarray:
        """Site coordinates, shape ``(d, N, ..., N)``, lexicographic order."""
        return np.stack(np.meshgrid(*[np.arange(self.N)] * self.d, indexing="ij"))

    def wrap(self, x):
        return np.mod(x, self.N)


def _check_values(values, shape, what):
    values = np.asarray(values, dtype=float)
    if values.shape != shape:
        raise ValueError(f"{what}: expected shape {shape}, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what}: non-finite values")
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class ScalarField:
    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.values, self.grid.shape, "ScalarField"))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class VectorField:
    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = (self.grid.d,) + self.grid.shape
        object.__setattr__(self, "values", _check_values(self.values, shape, "VectorField"))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.d,) + grid.shape))

    @classmethod
    def constant(cls, grid, vector):
        vector = np.asarray(vector, dtype=float).reshape((grid.d,) + (1,) * grid.d)
        return cls(grid, np.broadcast_to(vector, (grid.d,) + grid.shape).copy())

    def mean(self) -> np.ndarray:
        return self.values.reshape(self.grid.d, -1).mean(axis=1)

    def __add__(self, other):
        _same_grid(self, other)
        return VectorField(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self, other)
        return VectorField(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return VectorField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True)
class MatrixField:
    """A ``d x d`` matrix per site (cell), e.g. a conductivity ``A(x)``."""

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = (self.grid.d, self.grid.d) + self.grid.shape
        object.__setattr__(self, "values", _check_values(self.values, shape, "MatrixField"))

    @classmethod
    def constant(cls, grid, matrix):
        matrix = np.asarray(matrix, dtype=float).reshape((grid.d, grid.d) + (1,) * grid.d)
        return cls(grid, np.broadcast_to(matrix, (grid.d, grid.d) + grid.shape).copy())

    def is_symmetric(self, atol=SKEW_ATOL) -> bool:
        return bool(np.allclose(self.values, self.values.swapaxes(0, 1), rtol=0, atol=atol))

    def is_skew(self, atol=SKEW_ATOL) -> bool:
        return bool(np.allclose(self.values, -self.values.swapaxes(0, 1), rtol=0, atol=atol))

    def mean(self) -> np.ndarray:
        d = self.grid.d
        return self.values.reshape(d, d, -1).mean(axis=2)


@dataclass(frozen=True)
class SkewMatrixField(MatrixField):
    """Skew-symmetric matrix field ``H``, an element of the stream-matrix space."""

    def __post_init__(self):
        super().__post_init__()
        if not self.is_skew():
            raise ValueError("SkewMatrixField: H[i, j] != -H[j, i] at some site")


Field = Union[ScalarField, VectorField, MatrixField]


def _same_grid(a, b):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


# -- array kernels -----------------------------------------------------------
# These act on raw arrays; the container functions below wrap them.

def _grad(f):
    return np.stack([np.roll(f, -1, axis=i) - f for i in range(f.ndim)])


def _grad_adj(v):
    out = np.zeros(v.shape[1:])
    for i in range(v.shape[0]):
        out += np.roll(v[i], 1, axis=i) - v[i]
    return out


def _skew_div(H):
    # Backward differences: H[i, j] sits on the plaquette spanned by e_i, e_j at x,
    # which makes the image orthogonal to forward gradients.
    d = H.shape[0]
    out = np.zeros((d,) + H.shape[2:])
    for i in range(d):
        for j in range(d):
            if i != j:
                out[i] += H[i, j] - np.roll(H[i, j], 1, axis=j)
    return out


def _skew_div_adj(v):
    """Adjoint of ``_skew_div`` restricted to skew fields, returned as a skew array."""
    d = v.shape[0]
    H = np.zeros((d, d) + v.shape[1:])
    for i in range(d):
        for j in range(i + 1, d):
            # <div H, v> = sum_{i<j} <H_ij, B_j^T v_i - B_i^T v_j>
            h = (v[i] - np.roll(v[i], -1, axis=j)) - (v[j] - np.roll(v[j], -1, axis=i))
            H[i, j] = h
            H[j, i] = -h
    return H


def _laplacian(f):
    """``grad^* grad f``, the (positive) discrete Laplacian."""
    out = 2.0 * f.ndim * f
    for i in range(f.ndim):
        out -= np.roll(f, -1, axis=i) + np.roll(f, 1, axis=i)
    return out


# -- public operators --------------------------------------------------------

def grad(f: ScalarField) -> VectorField:
    """Forward difference ``(grad f)_i(x) = f(x + e_i) - f(x)``."""
    return VectorField(f.grid, _grad(f.values))


def grad_adjoint(v: VectorField) -> ScalarField:
    """Adjoint of :func:`grad` for the normalised inner products."""
    return ScalarField(v.grid, _grad_adj(v.values))


def skew_div(H: MatrixField) -> VectorField:
    """Lattice divergence of a skew matrix field.

    ``(div H)_i(x) = sum_j H_ij(x) - H_ij(x - e_j)``.  The result is
    divergence free and has zero mean.
    """
    if not isinstance(H, SkewMatrixField) and not H.is_skew():
        raise ValueError("skew_div requires a skew-symmetric matrix field")
    return VectorField(H.grid, _skew_div(H.values))


def laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, _laplacian(f.values))


def inner(u, v) -> float:
    """``sum_i N^-d sum_x u_i(x) v_i(x)``; also works for scalar and matrix fields."""
    _same_grid(u, v)
    return float(np.vdot(u.values, v.values)) / u.grid.size


def norm(v) -> float:
    return float(np.sqrt(max(inner(v, v), 0.0)))


def shift(field_, k):
    """Translate a field by the lattice vector ``k``: ``(shift f)(x) = f(x - k)``."""
    grid = field_.grid
    k = tuple(int(s) for s in np.broadcast_to(np.asarray(k), (grid.d,)))
    lead = field_.values.ndim - grid.d
    axes = tuple(range(lead, lead + grid.d))
    return type(field_)(grid, np.roll(field_.values, k, axis=axes))
