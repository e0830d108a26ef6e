"""Ensemble sweeps over window size and realisation.

A run is described by a small INI file::

    [experiment]
    case = discrete            ; discrete | continuous_symmetric | nonsym_flow | weyl_defect | birkhoff
    d = 2
    N = 16, 32, 64
    realizations = 32
    seed = 2024
    tol = 1e-10
    output = runs/two_phase

    [medium]
    type = iid_two_phase
    t_low = 0.5
    t_high = 2.0
    p = 0.5

Results go to ``rows.csv`` (one line per window size and realisation) and
``summary.json``.  Rerunning the same file skips rows already on disk.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .homogenize import (sigma_dual_discrete, sigma_nonsym, sigma_primal_continuous,
                         sigma_primal_discrete)
from .lattice import TorusGrid
from .media import (Constant, DeterministicPeriodic, IIDTwoPhase, IIDUniform, Laminate,
                    MediumSpec, MovingAverage, Seed, StationaryFieldSpec, birkhoff_quality,
                    known_potential_second_moment, sample_conductances, sample_known_potential,
                    sample_matrix_field)
from .solvers import DEFAULT_TOL, SolverError
from .weyl import decomposition_defect

log = logging.getLogger(__name__)

CASES = ("discrete", "continuous_symmetric", "nonsym_flow", "weyl_defect", "birkhoff")
SCALAR_CASES = ("weyl_defect", "birkhoff")


class ConfigError(ValueError):
    pass


# -- medium parsing ----------------------------------------------------------

def _floats(text) -> List[float]:
    return [float(t) for t in str(text).replace(",", " ").split()]


def _opt_float(opts, key):
    return float(opts[key]) if key in opts else None


def parse_medium(opts: Dict[str, str]) -> MediumSpec:
    """Build a medium from ``key = value`` pairs; ``type`` selects the variant."""
    opts = {k.strip().lower(): str(v).strip() for k, v in opts.items()}
    kind = opts.pop("type", None)
    if kind is None:
        raise ConfigError("medium needs a 'type'")
    c = _opt_float(opts, "contrast")
    try:
        if kind == "constant":
            vals = _floats(opts.get("value", "1"))
            return Constant(vals[0] if len(vals) == 1 else tuple(vals), c)
        if kind == "laminate":
            # "1 2 3" is one value per layer; "1 2; 3 4" gives per-direction values per layer
            rows = [tuple(_floats(r)) for r in opts.get("profile", "1").split(";") if r.strip()]
            profile = rows[0] if len(rows) == 1 else tuple(rows)
            return Laminate(int(opts.get("axis", 0)), profile, c)
        if kind == "iid_two_phase":
            return IIDTwoPhase(float(opts.get("t_low", 0.5)), float(opts.get("t_high", 2.0)),
                               float(opts.get("p", 0.5)), c)
        if kind == "iid_uniform":
            if "low" not in opts and c is not None:
                return IIDUniform(1.0 / c, c, c)
            return IIDUniform(float(opts.get("low", 0.5)), float(opts.get("high", 2.0)), c)
        if kind == "moving_average":
            return MovingAverage(int(opts.get("radius", 2)), float(opts.get("amplitude", 0.5)),
                                 c if c is not None else 4.0)
        if kind == "deterministic_periodic":
            period = tuple(int(p) for p in _floats(opts["period"]))
            rows = [r for r in opts["table"].split(";") if r.strip()]
            table = np.array([_floats(r) for r in rows])
            shape = period if len(rows) == 1 else (len(rows),) + period
            return DeterministicPeriodic(period, table.reshape(shape), c)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad {kind} medium: {exc}") from exc
    raise ConfigError(f"unknown medium type {kind!r}")


def parse_inline_medium(text: str) -> MediumSpec:
    """``"iid_two_phase:t_low=0.5,t_high=2,p=0.5"`` style one-liners."""
    kind, _, rest = text.partition(":")
    opts = {"type": kind.strip()}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        if "=" not in item:
            raise ConfigError(f"expected key=value in medium string, got {item!r}")
        k, v = item.split("=", 1)
        opts[k.strip()] = v
    return parse_medium(opts)


# -- configuration -----------------------------------------------------------

@dataclass
class ExperimentConfig:
    case: str
    d: int
    N_list: Tuple[int, ...]
    realizations: int
    seed: int
    medium: MediumSpec
    output: Path
    tol: float = DEFAULT_TOL
    max_iter: Optional[int] = None
    formula: str = "primal"
    a: Optional[np.ndarray] = None
    skew_bound: float = 1.0
    rotate: bool = False
    field_kind: str = "potential"
    mean_exponent: int = 2
    moment_exponent: int = 1
    timing: bool = False
    canonical: str = field(default="", repr=False)

    def __post_init__(self):
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}; expected one of {', '.join(CASES)}")
        if not 1 <= self.d <= 3:
            raise ConfigError("d must be 1, 2 or 3")
        if not self.N_list or any(b <= a for a, b in zip(self.N_list, self.N_list[1:])):
            raise ConfigError("N list must be non-empty and strictly increasing")
        if min(self.N_list) < 2:
            raise ConfigError("window sizes must be >= 2")
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        if not self.tol > 0:
            raise ConfigError("tolerances must be positive")
        if self.formula not in ("primal", "dual"):
            raise ConfigError("formula must be primal or dual")
        if self.case == "nonsym_flow":
            a = np.eye(self.d) if self.a is None else np.asarray(self.a, dtype=float)
            if a.size == 1:
                a = float(a.ravel()[0]) * np.eye(self.d)
            if a.shape != (self.d, self.d) or not np.allclose(a, a.T) or np.linalg.eigvalsh(a).min() <= 0:
                raise ConfigError("flow matrix a must be symmetric positive definite of size d x d")
            self.a = a

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical.encode()).hexdigest()[:16]


def _canonical(cp: configparser.ConfigParser) -> str:
    out = []
    for sec in sorted(cp.sections()):
        for k in sorted(cp[sec]):
            if sec == "experiment" and k in ("output", "threads"):
                continue
            out.append(f"{sec}.{k}={' '.join(cp[sec][k].split())}")
    return "\n".join(out)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_config(text: str, base_dir=".") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if "experiment" not in cp or "medium" not in cp:
        raise ConfigError("config needs [experiment] and [medium] sections")
    ex = cp["experiment"]
    try:
        flow = cp["flow"] if "flow" in cp else {}
        a = None
        if "a" in flow:
            rows = [_floats(r) for r in flow["a"].split(";") if r.strip()]
            a = np.array(rows, dtype=float)
        out = Path(ex.get("output", "perihom_out"))
        if not out.is_absolute():
            out = Path(base_dir) / out
        return ExperimentConfig(
            case=ex.get("case", "discrete").strip(),
            d=int(ex.get("d", 2)),
            N_list=tuple(int(n) for n in _floats(ex.get("N", "8"))),
            realizations=int(ex.get("realizations", 1)),
            seed=int(ex.get("seed", 0)),
            medium=parse_medium(dict(cp["medium"])),
            output=out,
            tol=float(ex.get("tol", DEFAULT_TOL)),
            max_iter=int(ex["max_iter"]) if "max_iter" in ex else None,
            formula=ex.get("formula", "primal").strip(),
            a=a,
            skew_bound=float(flow.get("bound", 1.0)),
            rotate=_bool(ex.get("rotate", "false")),
            field_kind=ex.get("field", "potential").strip(),
            mean_exponent=int(ex.get("mean_exponent", 2)),
            moment_exponent=int(ex.get("moment_exponent", 1)),
            timing=_bool(ex.get("timing", "false")),
            canonical=_canonical(cp),
        )
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


# -- per-cell computation ----------------------------------------------------

def header(d: int) -> List[str]:
    entries = [f"entry_{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    return ["case", "d", "N", "realization", "seed"] + entries + ["iterations", "residual", "wall_ms", "status"]


def compute_cell(cfg: ExperimentConfig, N: int, r: int) -> dict:
    """One (window size, realisation) item.  Never raises on compute failure."""
    seed = Seed(cfg.seed, r)
    grid = TorusGrid(cfg.d, N)
    t0 = time.perf_counter()
    value = np.full((cfg.d, cfg.d), np.nan)
    iterations, residual, status = 0, 0.0, "ok"
    try:
        reports = []
        if cfg.case == "discrete":
            xi = sample_conductances(cfg.medium, seed, grid)
            if cfg.formula == "dual":
                t = sigma_dual_discrete(xi, tol=cfg.tol, max_iter=cfg.max_iter)
                value = np.linalg.inv(t.sigma)
            else:
                t, _ = sigma_primal_discrete(xi, tol=cfg.tol, max_iter=cfg.max_iter)
                value = t.sigma
            reports = t.reports
        elif cfg.case == "continuous_symmetric":
            A = sample_matrix_field(cfg.medium, seed, grid, "symmetric", rotate=cfg.rotate)
            t, _ = sigma_primal_continuous(A, tol=cfg.tol, max_iter=cfg.max_iter)
            value, reports = t.sigma, t.reports
        elif cfg.case == "nonsym_flow":
            E = sample_matrix_field(cfg.medium, seed, grid, "skew", bound=cfg.skew_bound)
            t, _ = sigma_nonsym(cfg.a, E, tol=cfg.tol, max_iter=cfg.max_iter)
            value, reports = t.sigma, t.reports
        elif cfg.case == "weyl_defect":
            sampler = StationaryFieldSpec(cfg.medium, cfg.d, cfg.field_kind)
            kind = {"potential": "pot", "solenoidal": "sol", "constant": "mean"}[cfg.field_kind]
            value = np.array([[decomposition_defect(sampler, kind, seed, [N])[0].defect_rel]])
        elif cfg.case == "birkhoff":
            v = sample_known_potential(cfg.medium, seed, grid)
            ref = known_potential_second_moment(cfg.medium, cfg.d)
            value = np.array([[float(birkhoff_quality(v, ref, cfg.mean_exponent, cfg.moment_exponent))]])
        if reports:
            iterations = sum(rep.iterations for rep in reports)
            residual = max(rep.residual for rep in reports)
    except (SolverError, ValueError, ArithmeticError, KeyError) as exc:
        log.warning("cell N=%d r=%d failed: %s", N, r, exc)
        status = "failed"
        value = np.full((cfg.d, cfg.d), np.nan)
    wall_ms = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
    return {"N": N, "realization": r, "seed": seed.key, "value": value, "iterations": iterations,
            "residual": residual, "wall_ms": wall_ms, "status": status}


def _fmt(x) -> str:
    return repr(float(x))


def format_row(cfg: ExperimentConfig, cell: dict) -> List[str]:
    value = cell["value"]
    d = cfg.d
    if cfg.case in SCALAR_CASES:
        entries = [_fmt(value.flat[0])] + [""] * (d * d - 1)
    else:
        entries = [_fmt(x) for x in np.asarray(value).reshape(d, d).ravel()]
    return [cfg.case, str(d), str(cell["N"]), str(cell["realization"]), str(cell["seed"])] + entries + [
        str(cell["iterations"]), _fmt(cell["residual"]), f"{cell['wall_ms']:.3f}", cell["status"]]


# -- persistence --------------------------------------------------------------

def read_rows(path, d) -> List[dict]:
    """Parse ``rows.csv``; truncated or malformed lines (e.g. after a crash) are dropped."""
    path = Path(path)
    if not path.exists():
        return []
    want = header(d)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first != want:
            return []
        for rec in reader:
            if len(rec) != len(want) or rec[-1] not in ("ok", "failed"):
                continue
            rows.append(dict(zip(want, rec)))
    return rows


def _row_key(row) -> Tuple[int, int]:
    return int(row["N"]), int(row["realization"])


@dataclass
class RateFit:
    slope: float
    intercept: float
    residual: float
    n_points: int
    flag: str = "ok"

    @property
    def ok(self) -> bool:
        return self.flag == "ok"


@dataclass
class ConvergenceRecord:
    """Raw per-(N, r) rows plus per-N ensemble statistics."""

    case: str
    d: int
    rows: List[dict]
    N_list: Tuple[int, ...] = ()
    mean: Dict[int, np.ndarray] = field(default_factory=dict)
    std: Dict[int, np.ndarray] = field(default_factory=dict)
    count: Dict[int, int] = field(default_factory=dict)
    failed: Dict[int, int] = field(default_factory=dict)
    digest: str = ""

    @classmethod
    def from_rows(cls, case, d, rows, digest=""):
        rec = cls(case, d, sorted(rows, key=_row_key), digest=digest)
        names = [f"entry_{i + 1}{j + 1}" for i in range(d) for j in range(d)]
        if case in SCALAR_CASES:
            names = names[:1]
        Ns = sorted({int(r["N"]) for r in rows})
        rec.N_list = tuple(Ns)
        for N in Ns:
            sel = [r for r in rec.rows if int(r["N"]) == N]
            ok = [r for r in sel if r["status"] == "ok"]
            rec.failed[N] = len(sel) - len(ok)
            rec.count[N] = len(ok)
            vals = np.array([[float(r[k]) for k in names] for r in ok]).reshape(len(ok), len(names))
            if ok:
                rec.mean[N] = vals.mean(axis=0)
                rec.std[N] = vals.std(axis=0, ddof=1) if len(ok) > 1 else np.zeros(len(names))
            else:
                rec.mean[N] = np.full(len(names), np.nan)
                rec.std[N] = np.full(len(names), np.nan)
        return rec

    def series(self, quantity=None, entry=0):
        """``(N, value)`` pairs for rate fitting: ensemble std, or the mean for defect-type cases."""
        if quantity is None:
            quantity = "mean" if self.case == "weyl_defect" else "std"
        table = self.mean if quantity == "mean" else self.std
        return [(N, float(table[N][entry])) for N in self.N_list if self.count.get(N, 0) > 0]


def fit_rate(record, quantity=None, entry=0) -> RateFit:
    """Least-squares slope of ``log(value)`` against ``log N``.

    ``record`` is a :class:`ConvergenceRecord` or a list of ``(N, value)``
    pairs.  Fewer than three usable points, or any non-positive value,
    gives a flagged no-fit.
    """
    pts = record.series(quantity, entry) if isinstance(record, ConvergenceRecord) else list(record)
    pts = [(N, v) for N, v in pts if math.isfinite(v)]
    if len(pts) < 3:
        return RateFit(math.nan, math.nan, math.nan, len(pts), "too_few_points")
    if any(v <= 0 for _, v in pts):
        return RateFit(math.nan, math.nan, math.nan, len(pts), "degenerate")
    x = np.log([N for N, _ in pts])
    y = np.log([v for _, v in pts])
    (slope, intercept), res, *_ = np.polyfit(x, y, 1, full=True)
    resid = float(np.sqrt(res[0] / len(pts))) if len(res) else 0.0
    return RateFit(float(slope), float(intercept), resid, len(pts))


def summary_dict(cfg: ExperimentConfig, rec: ConvergenceRecord) -> dict:
    fit = fit_rate(rec)
    return {
        "case": cfg.case,
        "d": cfg.d,
        "config_digest": cfg.digest,
        "version": __version__,
        "realizations": cfg.realizations,
        "per_N": [{"N": N, "count": rec.count[N], "failed": rec.failed[N],
                   "mean": [float(x) for x in rec.mean[N]], "std": [float(x) for x in rec.std[N]]}
                  for N in rec.N_list],
        "rate": {"slope": fit.slope, "intercept": fit.intercept, "residual": fit.residual,
                 "points": fit.n_points, "flag": fit.flag},
    }


def _threads():
    env = os.environ.get("PERIHOM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring PERIHOM_THREADS=%r", env)
    return min(4, os.cpu_count() or 1)


def run_experiment(cfg: ExperimentConfig, threads=None) -> ConvergenceRecord:
    """Compute every (N, r) cell not already on disk, then write rows and summary."""
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    rows_path, state_path = out / "rows.csv", out / "state.json"
    hdr = header(cfg.d)

    done = {}
    if state_path.exists() and rows_path.exists():
        try:
            state = json.loads(state_path.read_text())
        except (OSError, ValueError):
            state = {}
        if state.get("config_digest") == cfg.digest:
            done = {_row_key(r): r for r in read_rows(rows_path, cfg.d) if r["status"] == "ok"}
        else:
            log.info("config changed; starting a fresh run in %s", out)
    state_path.write_text(json.dumps({"config_digest": cfg.digest, "version": __version__}) + "\n")

    # rewrite the surviving rows so a partial trailing line cannot corrupt the file
    with open(rows_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(hdr)
        for key in sorted(done):
            w.writerow([done[key][k] for k in hdr])

    todo = [(N, r) for N in cfg.N_list for r in range(cfg.realizations) if (N, r) not in done]
    log.info("%d cells to compute, %d already done", len(todo), len(done))
    new_rows = {}
    n_threads = threads or _threads()
    with open(rows_path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")

        def record(cell):
            row = format_row(cfg, cell)
            w.writerow(row)
            fh.flush()
            new_rows[(cell["N"], cell["realization"])] = dict(zip(hdr, row))

        if n_threads == 1:
            for N, r in todo:
                record(compute_cell(cfg, N, r))
        else:
            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                futures = [pool.submit(compute_cell, cfg, N, r) for N, r in todo]
                for fut in as_completed(futures):
                    record(fut.result())

    allrows = {**done, **new_rows}
    ordered = [allrows[k] for k in sorted(allrows)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(hdr)
    for row in ordered:
        w.writerow([row[k] for k in hdr])
    tmp = rows_path.with_suffix(".tmp")
    tmp.write_text(buf.getvalue())
    tmp.replace(rows_path)

    rec = ConvergenceRecord.from_rows(cfg.case, cfg.d, read_rows(rows_path, cfg.d), cfg.digest)
    (out / "summary.json").write_text(json.dumps(summary_dict(cfg, rec), indent=2, allow_nan=True) + "\n")
    return rec
