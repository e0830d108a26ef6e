"""Fast invariant checks bundled with the package, used by ``perihom selftest``."""
from __future__ import annotations

import numpy as np

from .homogenize import (nonsym_bounds, norris_value, psd_slack, sigma_dual_discrete,
                         sigma_from_energy_crosscheck, sigma_nonsym, sigma_primal_continuous,
                         sigma_primal_discrete, voigt_reuss)
from .lattice import MatrixField, TorusGrid, VectorField, inner
from .media import IIDTwoPhase, Seed, sample_conductances
from .weyl import decompose, pot_potential, sol_stream


def _constant_media():
    worst = 0.0
    for d in (1, 2, 3):
        g = TorusGrid(d, 4)
        t, _ = sigma_primal_discrete(VectorField.constant(g, [1.7] * d))
        worst = max(worst, np.abs(t.sigma - 1.7 * np.eye(d)).max() / 1.7)
    return worst <= 1e-12, f"max relative error {worst:.2e}"


def _harmonic_1d():
    rng = np.random.default_rng(0)
    g = TorusGrid(1, 32)
    xi = rng.uniform(0.2, 5.0, (1, 32))
    t, _ = sigma_primal_discrete(VectorField(g, xi))
    err = abs(t.sigma[0, 0] - 1 / np.mean(1 / xi)) / t.sigma[0, 0]
    return err <= 1e-10, f"relative error {err:.2e}"


def _duality():
    g = TorusGrid(2, 8)
    xi = sample_conductances(IIDTwoPhase(0.5, 2.0, 0.5), Seed(1), g)
    p, sol = sigma_primal_discrete(xi)
    q = sigma_dual_discrete(xi)
    sigma_from_energy_crosscheck(sol, xi)
    lo, hi = voigt_reuss(xi)
    diag = np.diag(p.sigma)
    err = np.abs(p.sigma @ q.sigma - np.eye(2)).max()
    ok = err <= 1e-8 and np.all(diag >= lo - 1e-10) and np.all(diag <= hi + 1e-10)
    return ok, f"|sigma sigma_dual - I| = {err:.2e}"


def _weyl():
    rng = np.random.default_rng(2)
    g = TorusGrid(3, 6)
    v = VectorField(g, rng.normal(size=(3,) + g.shape))
    s = decompose(v)
    ortho = abs(inner(s.pot, s.sol))
    rec = np.abs(s.reconstruct().values - v.values).max()
    pot_potential(s.pot)
    sol_stream(s.sol)
    return ortho <= 1e-12 and rec <= 1e-12, f"<pot, sol> = {ortho:.1e}, reconstruction {rec:.1e}"


def _continuous():
    g = TorusGrid(2, 8)
    A0 = np.array([[2.0, 0.3], [0.3, 1.0]])
    t, _ = sigma_primal_continuous(MatrixField.constant(g, A0))
    err = np.abs(t.sigma - A0).max() / 2.0
    return err <= 1e-12, f"relative error {err:.2e}"


def _nonsym():
    rng = np.random.default_rng(3)
    g = TorusGrid(2, 6)
    h = rng.uniform(-1, 1, (2, 2) + g.shape)
    E = MatrixField(g, h - h.swapaxes(0, 1))
    a = np.array([[1.2, 0.1], [0.1, 0.9]])
    t, _ = sigma_nonsym(a, E)
    tm, _ = sigma_nonsym(a, MatrixField(g, -E.values))
    lo, hi = nonsym_bounds(a, E)
    xi, l = np.array([0.3, -1.0]), np.array([1.0, 0.5])
    r = xi - t.sigma @ l
    ref = r @ np.linalg.solve(t.sym, r)
    val = norris_value(a, E, xi, l)
    errs = (np.abs(tm.sigma - t.sigma.T).max(), abs(val - ref) / ref)
    ok = errs[0] <= 1e-8 and errs[1] <= 1e-6 and psd_slack(lo, t.sym) >= -1e-10 and psd_slack(t.sym, hi) >= -1e-10
    return ok, f"transpose {errs[0]:.1e}, Norris {errs[1]:.1e}"


CHECKS = [
    ("constant media", _constant_media),
    ("1D harmonic mean", _harmonic_1d),
    ("primal/dual duality", _duality),
    ("Weyl decomposition", _weyl),
    ("continuous constant coefficient", _continuous),
    ("divergence-free flow", _nonsym),
]


def run_selftest(out=print) -> bool:
    all_ok = True
    for name, check in CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:  # report, never crash the runner
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        all_ok &= bool(ok)
    return all_ok
