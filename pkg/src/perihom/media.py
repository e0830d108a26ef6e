"""Stationary random media on Z^d and their periodisation onto tori.

Every random value is a pure function of ``(seed, realization, absolute
site, channel)`` computed by a counter-based hash, so a window of side N is
exactly the restriction of any larger window with the same seed.
Periodising is then just reading the window ``[0, N)^d`` and treating it as
a torus.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .lattice import MatrixField, SkewMatrixField, TorusGrid, VectorField

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1

# channel namespaces
CH_MATRIX_EIG = 10
CH_MATRIX_ROT = 20
CH_SKEW = 30
CH_POTENTIAL = 40
CH_STREAM = 50


def _splitmix(x):
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def mix(*parts) -> int:
    """Hash a tuple of integers to a 64-bit integer."""
    h = np.uint64(0)
    for p in parts:
        h = _splitmix(h ^ np.uint64(int(p) & _MASK))
    return int(h)


@dataclass(frozen=True)
class Seed:
    master: int
    realization: int = 0

    @property
    def key(self) -> int:
        return mix(self.master, self.realization)


def _as_seed(seed) -> Seed:
    return seed if isinstance(seed, Seed) else Seed(int(seed))


def uniform(seed, origin, shape, channel) -> np.ndarray:
    """U[0,1) values on the box ``origin + [0, shape)`` of Z^d."""
    key = np.uint64(_as_seed(seed).key)
    axes = [np.arange(o, o + n, dtype=np.int64).astype(np.uint64) for o, n in zip(origin, shape)]
    h = np.full(tuple(shape), key, dtype=np.uint64)
    for i, ax in enumerate(axes):
        idx = [None] * len(shape)
        idx[i] = slice(None)
        h = _splitmix(h ^ ax[tuple(idx)])
    h = _splitmix(h ^ np.uint64(channel & _MASK))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def moving_average(seed, origin, shape, channel, radius) -> np.ndarray:
    """Unit-variance box average of iid noise over ``[-radius, radius]^d`` stencils."""
    d = len(shape)
    width = 2 * radius + 1
    noise = np.sqrt(12.0) * (uniform(seed, [o - radius for o in origin],
                                     [n + 2 * radius for n in shape], channel) - 0.5)
    out = noise
    for ax in range(d):
        c = np.cumsum(out, axis=ax)
        c = np.concatenate([np.zeros_like(np.take(c, [0], axis=ax)), c], axis=ax)
        n = out.shape[ax]
        out = np.take(c, np.arange(width, n + 1), axis=ax) - np.take(c, np.arange(0, n + 1 - width), axis=ax)
    return out / width ** (d / 2)


# -- medium specifications ---------------------------------------------------

class MediumSpec:
    """Base class.  Subclasses produce values in ``[1/c, c]`` on boxes of Z^d."""

    contrast: float

    def box(self, seed, origin, shape, channel, direction) -> np.ndarray:
        raise NotImplementedError

    def _check_bounds(self, lo, hi):
        c = self.contrast
        if not np.isfinite(c) or c < 1:
            raise ValueError(f"contrast must be a finite number >= 1, got {c}")
        if lo < 1 / c * (1 - 1e-12) or hi > c * (1 + 1e-12):
            raise ValueError(f"values [{lo}, {hi}] fall outside [1/c, c] with c = {c}")

    @property
    def radius(self) -> int:
        return 0


def _auto_contrast(values):
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0):
        raise ValueError("conductances must be positive")
    return float(max(values.max(), 1.0 / values.min(), 1.0))


@dataclass(frozen=True)
class Constant(MediumSpec):
    value: Union[float, Sequence[float]] = 1.0
    contrast: Optional[float] = None

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.value, dtype=float))
        if self.contrast is None:
            object.__setattr__(self, "contrast", _auto_contrast(v))
        self._check_bounds(v.min(), v.max())

    def box(self, seed, origin, shape, channel, direction):
        v = np.atleast_1d(np.asarray(self.value, dtype=float))
        return np.full(tuple(shape), v[direction % v.size])


@dataclass(frozen=True)
class Laminate(MediumSpec):
    """Layers stacked along ``axis``; ``profile[k]`` is a value or per-direction tuple."""

    axis: int = 0
    profile: tuple = (1.0,)
    contrast: Optional[float] = None

    def __post_init__(self):
        prof = np.asarray(self.profile, dtype=float)
        if prof.ndim not in (1, 2) or prof.shape[0] == 0:
            raise ValueError("laminate profile must be a non-empty list of values or per-direction tuples")
        if self.contrast is None:
            object.__setattr__(self, "contrast", _auto_contrast(prof))
        self._check_bounds(prof.min(), prof.max())

    def box(self, seed, origin, shape, channel, direction):
        if self.axis >= len(shape):
            raise ValueError(f"laminate axis {self.axis} out of range for d = {len(shape)}")
        prof = np.asarray(self.profile, dtype=float)
        if prof.ndim == 2:
            prof = prof[:, direction % prof.shape[1]]
        x = np.arange(origin[self.axis], origin[self.axis] + shape[self.axis])
        layer = prof[np.mod(x, prof.size)]
        idx = [None] * len(shape)
        idx[self.axis] = slice(None)
        return np.broadcast_to(layer[tuple(idx)], tuple(shape)).copy()


@dataclass(frozen=True)
class IIDTwoPhase(MediumSpec):
    t_low: float = 0.5
    t_high: float = 2.0
    p: float = 0.5
    contrast: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError(f"probability must lie in [0, 1], got {self.p}")
        if self.contrast is None:
            object.__setattr__(self, "contrast", _auto_contrast([self.t_low, self.t_high]))
        self._check_bounds(min(self.t_low, self.t_high), max(self.t_low, self.t_high))

    def box(self, seed, origin, shape, channel, direction):
        u = uniform(seed, origin, shape, channel)
        return np.where(u < self.p, self.t_high, self.t_low)


@dataclass(frozen=True)
class IIDUniform(MediumSpec):
    low: float = 0.5
    high: float = 2.0
    contrast: Optional[float] = None

    def __post_init__(self):
        if not self.low <= self.high:
            raise ValueError("uniform bounds must satisfy low <= high")
        if self.contrast is None:
            object.__setattr__(self, "contrast", _auto_contrast([self.low, self.high]))
        self._check_bounds(self.low, self.high)

    def box(self, seed, origin, shape, channel, direction):
        return self.low + (self.high - self.low) * uniform(seed, origin, shape, channel)


@dataclass(frozen=True)
class MovingAverage(MediumSpec):
    """Log-normal-like finite-range field ``clip(exp(amplitude * u), 1/c, c)``."""

    stencil_radius: int = 2
    amplitude: float = 0.5
    contrast: float = 4.0

    def __post_init__(self):
        if self.stencil_radius < 0:
            raise ValueError("stencil radius must be >= 0")
        self._check_bounds(1 / self.contrast, self.contrast)

    @property
    def radius(self):
        return self.stencil_radius

    def box(self, seed, origin, shape, channel, direction):
        u = moving_average(seed, origin, shape, channel, self.stencil_radius)
        c = self.contrast
        return np.clip(np.exp(self.amplitude * u), 1 / c, c)


@dataclass(frozen=True)
class DeterministicPeriodic(MediumSpec):
    """``table`` has shape ``period`` or ``(n_directions,) + period``."""

    period: tuple = (1,)
    table: np.ndarray = field(default_factory=lambda: np.ones(1))
    contrast: Optional[float] = None

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        period = tuple(int(p) for p in self.period)
        if table.shape != period and table.shape[1:] != period:
            raise ValueError(f"table shape {table.shape} does not match period {period}")
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "period", period)
        if self.contrast is None:
            object.__setattr__(self, "contrast", _auto_contrast(table))
        self._check_bounds(table.min(), table.max())

    def __hash__(self):
        return hash((self.period, self.table.tobytes(), self.contrast))

    def box(self, seed, origin, shape, channel, direction):
        if len(shape) != len(self.period):
            raise ValueError(f"period {self.period} does not match d = {len(shape)}")
        table = self.table
        if table.shape != self.period:
            table = table[direction % table.shape[0]]
        idx = np.ix_(*[np.mod(np.arange(o, o + n), p) for o, n, p in zip(origin, shape, self.period)])
        return table[idx]


# -- samplers ----------------------------------------------------------------

def sample_conductances(spec: MediumSpec, seed, grid: TorusGrid) -> VectorField:
    """Periodised jump rates: ``xi_i(x)`` on the edge ``x -> x + e_i``."""
    origin = (0,) * grid.d
    vals = np.stack([spec.box(seed, origin, grid.shape, i, i) for i in range(grid.d)])
    return VectorField(grid, vals)


def _rotations(seed, grid):
    d = grid.d
    origin = (0,) * d
    if d == 2:
        t = 2 * np.pi * uniform(seed, origin, grid.shape, CH_MATRIX_ROT)
        c, s = np.cos(t), np.sin(t)
        return np.array([[c, -s], [s, c]])
    # uniformly random unit quaternions
    u1, u2, u3 = (uniform(seed, origin, grid.shape, CH_MATRIX_ROT + k) for k in range(3))
    a = np.sqrt(1 - u1) * np.sin(2 * np.pi * u2)
    b = np.sqrt(1 - u1) * np.cos(2 * np.pi * u2)
    c = np.sqrt(u1) * np.sin(2 * np.pi * u3)
    w = np.sqrt(u1) * np.cos(2 * np.pi * u3)
    return np.array([
        [1 - 2 * (b * b + c * c), 2 * (a * b - c * w), 2 * (a * c + b * w)],
        [2 * (a * b + c * w), 1 - 2 * (a * a + c * c), 2 * (b * c - a * w)],
        [2 * (a * c - b * w), 2 * (b * c + a * w), 1 - 2 * (a * a + b * b)],
    ])


def sample_matrix_field(spec: MediumSpec, seed, grid: TorusGrid, kind="symmetric",
                        bound=1.0, rotate=False) -> MatrixField:
    """Per-cell matrices ``A(x)`` (symmetric) or ``E(x)`` (skew).

    Symmetric: eigenvalues are drawn from ``spec`` and so lie in ``[1/c, c]``;
    with ``rotate`` the eigenframe is a random rotation per cell.
    Skew: ``E_ij = bound * log(w) / log(c)`` with ``w`` drawn from ``spec``,
    so ``|E_ij| <= bound``.
    """
    d = grid.d
    origin = (0,) * d
    if kind == "symmetric":
        lam = np.stack([spec.box(seed, origin, grid.shape, CH_MATRIX_EIG + i, i) for i in range(d)])
        if rotate and d > 1:
            R = _rotations(seed, grid)
            A = np.einsum("ik...,k...,jk...->ij...", R, lam, R)
            A = 0.5 * (A + A.swapaxes(0, 1))
        else:
            A = np.zeros((d, d) + grid.shape)
            for i in range(d):
                A[i, i] = lam[i]
        return MatrixField(grid, A)
    if kind == "skew":
        E = np.zeros((d, d) + grid.shape)
        c = spec.contrast
        pair = 0
        for i in range(d):
            for j in range(i + 1, d):
                if c > 1:
                    w = spec.box(seed, origin, grid.shape, CH_SKEW + pair, pair)
                    E[i, j] = bound * np.log(w) / np.log(c)
                    E[j, i] = -E[i, j]
                pair += 1
        return SkewMatrixField(grid, E)
    raise ValueError(f"unknown matrix kind {kind!r}; expected 'symmetric' or 'skew'")


def _check_window(spec, grid):
    r = getattr(spec, "radius", 0)
    if not isinstance(spec, MovingAverage):
        raise ValueError("known potential/solenoidal fields need a moving_average medium")
    if r >= grid.N / 4:
        raise ValueError(f"stencil radius {r} too large for window N = {grid.N} (need r < N/4)")
    return r


def sample_known_potential(spec: MovingAverage, seed, grid: TorusGrid) -> VectorField:
    """Periodisation of ``grad u`` for a stationary finite-range scalar ``u``.

    The gradient is taken on Z^d before windowing, so edges leaving the
    window use values of ``u`` outside it.
    """
    r = _check_window(spec, grid)
    u = moving_average(seed, (0,) * grid.d, (grid.N + 1,) * grid.d, CH_POTENTIAL, r)
    window = (slice(0, grid.N),) * grid.d
    vals = []
    for i in range(grid.d):
        up = [slice(0, grid.N)] * grid.d
        up[i] = slice(1, grid.N + 1)
        vals.append(u[tuple(up)] - u[window])
    return VectorField(grid, np.stack(vals))


def sample_known_solenoidal(spec: MovingAverage, seed, grid: TorusGrid) -> VectorField:
    """Periodisation of ``div H`` for a stationary finite-range skew field ``H``."""
    r = _check_window(spec, grid)
    d, N = grid.d, grid.N
    out = np.zeros((d,) + grid.shape)
    pair = 0
    for i in range(d):
        for j in range(i + 1, d):
            # H on [-1, N)^d so that H(x - e_j) is available for x in the window
            h = moving_average(seed, (-1,) * d, (N + 1,) * d, CH_STREAM + pair, r)
            here = (slice(1, N + 1),) * d
            for a, b, sign in ((i, j, 1.0), (j, i, -1.0)):
                back = [slice(1, N + 1)] * d
                back[b] = slice(0, N)
                out[a] += sign * (h[here] - h[tuple(back)])
            pair += 1
    return VectorField(grid, out)


@dataclass(frozen=True)
class StationaryFieldSpec:
    """A stationary vector field of known Weyl type, sampled on any window."""

    medium: MediumSpec
    d: int
    kind: str = "potential"

    def sample(self, seed, grid: TorusGrid) -> VectorField:
        if grid.d != self.d:
            raise ValueError("grid dimension does not match field spec")
        if self.kind == "potential":
            return sample_known_potential(self.medium, seed, grid)
        if self.kind == "solenoidal":
            return sample_known_solenoidal(self.medium, seed, grid)
        if self.kind == "constant":
            return sample_conductances(self.medium, seed, grid)
        raise ValueError(f"unknown stationary field kind {self.kind!r}")


def known_potential_second_moment(spec: MovingAverage, d: int) -> float:
    """``<|grad u|^2>`` for the moving-average potential, in closed form.

    ``u`` has unit variance and ``Cov(u(x), u(x + e_i)) = 2r / (2r + 1)``.
    """
    r = spec.stencil_radius
    return d * 2.0 * (1.0 - 2 * r / (2 * r + 1))


# -- Birkhoff averaging diagnostic -------------------------------------------

def _membership(N, K):
    """Closed-interval membership of lattice points ``n/N`` in ``[(i-1)/K, i/K]``."""
    t = np.arange(N)[None, :] * K
    i = np.arange(1, K + 1)[:, None]
    return ((i - 1) * N <= t) & (t <= i * N)


def _boundary_cube_stats(arrays, N, K):
    """Sums of each array and point counts over the boundary cubes of the K-partition."""
    d = arrays[0].ndim
    mem = _membership(N, K)
    inner_rows = mem[mem.any(axis=1)].astype(float)
    ends = [k for k in (0, K - 1) if mem[k].any()]
    all_sums = [[] for _ in arrays]
    all_counts = []
    for axis in range(d):
        for end in ends:
            mats = [inner_rows] * d
            mats[axis] = mem[[end]].astype(float)
            for k, a in enumerate(arrays):
                s = a
                for ax in range(d):
                    s = np.moveaxis(np.tensordot(mats[ax], s, axes=([1], [ax])), 0, ax)
                all_sums[k].append(s.ravel())
            cnt = mats[0].sum(axis=1)
            for ax in range(1, d):
                cnt = np.multiply.outer(cnt, mats[ax].sum(axis=1))
            all_counts.append(cnt.ravel())
    counts = np.concatenate(all_counts)
    nonempty = counts > 0
    sums = [np.concatenate(s)[nonempty] for s in all_sums]
    return sums, counts[nonempty]


def birkhoff_quality(v: VectorField, second_moment_ref: float, mean_exponent=2, moment_exponent=1) -> int:
    """Lattice version of the Birkhoff rate ``f(N, xi, eta)``.

    Largest ``M <= N`` such that every boundary cube of the ``M**mean_exponent``
    partition has ``M * |average of v| <= 1`` and every boundary cube of the
    ``M**moment_exponent`` partition has ``average of |v|^2 <= 2 * ref``.
    Returns 1 when no ``M >= 2`` qualifies.
    """
    if second_moment_ref <= 0:
        raise ValueError("second_moment_ref must be positive")
    N = v.grid.N
    comps = [np.asarray(c) for c in v.values]
    sq = np.sum(v.values ** 2, axis=0)
    best = 1
    for M in range(2, N + 1):
        sums, counts = _boundary_cube_stats(comps, N, M ** mean_exponent)
        avg = np.sqrt(sum((s / counts) ** 2 for s in sums))
        if np.any(M * avg > 1.0):
            continue
        (ssum,), counts = _boundary_cube_stats([sq], N, M ** moment_exponent)
        if np.any(ssum / counts > 2.0 * second_moment_ref):
            continue
        best = M
    return best
