"""Command-line front end.

Exit codes: 0 success, 1 compute failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .fieldio import FieldFormatError, load
from .harness import ConfigError, fit_rate, load_config, parse_inline_medium, parse_medium, run_experiment
from .homogenize import (sigma_dual_discrete, sigma_nonsym, sigma_primal_continuous,
                         sigma_primal_discrete)
from .lattice import TorusGrid, VectorField, inner, norm
from .media import Seed, sample_conductances, sample_matrix_field
from .selftest import run_selftest
from .solvers import SolverError
from .weyl import decompose

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2


def _medium_from_arg(text):
    """A config file with a [medium] section, or an inline ``type:key=value,...`` string."""
    path = Path(text)
    if path.is_file():
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        if "medium" not in cp:
            raise ConfigError(f"{path} has no [medium] section")
        return parse_medium(dict(cp["medium"]))
    return parse_inline_medium(text)


def cmd_run(args):
    cfg = load_config(args.config)
    rec = run_experiment(cfg, threads=args.threads)
    failed = sum(rec.failed.values())
    for N in rec.N_list:
        print(f"N={N:<5d} ok={rec.count[N]:<4d} failed={rec.failed[N]:<3d} "
              f"mean_11={rec.mean[N][0]:.6g} std_11={rec.std[N][0]:.3g}")
    fit = fit_rate(rec)
    print(f"rate: {fit.slope:.3f} ({fit.flag})" if fit.ok else f"rate: no fit ({fit.flag})")
    print(f"results in {cfg.output}")
    return EXIT_COMPUTE if failed else EXIT_OK


def cmd_tensor(args):
    medium = _medium_from_arg(args.medium)
    grid = TorusGrid(args.d, args.N)
    seed = Seed(args.seed, args.realization)
    if args.continuous:
        A = sample_matrix_field(medium, seed, grid, "symmetric", rotate=args.rotate)
        tensor, _ = sigma_primal_continuous(A, tol=args.tol, medium=medium, seed=seed.key)
    elif args.nonsym:
        E = sample_matrix_field(medium, seed, grid, "skew", bound=args.bound)
        tensor, _ = sigma_nonsym(args.a * np.eye(args.d), E, tol=args.tol, medium=medium, seed=seed.key)
    else:
        xi = sample_conductances(medium, seed, grid)
        if args.dual:
            tensor = sigma_dual_discrete(xi, tol=args.tol, medium=medium, seed=seed.key)
        else:
            tensor, _ = sigma_primal_discrete(xi, tol=args.tol, medium=medium, seed=seed.key)
    print(tensor.to_json(indent=2))
    return EXIT_OK


def cmd_weyl(args):
    try:
        v = load(args.field)
    except OSError as exc:
        raise ConfigError(f"cannot read field file: {exc}") from exc
    if type(v) is not VectorField:
        raise ConfigError("weyl needs a vector field file")
    s = decompose(v)
    total = norm(v)
    report = {
        "d": v.grid.d,
        "N": v.grid.N,
        "norm": total,
        "mean": [float(x) for x in s.mean],
        "pot_norm": norm(s.pot),
        "sol_norm": norm(s.sol),
        "orthogonality": abs(inner(s.pot, s.sol)),
        "reconstruction_error": norm(s.reconstruct() - v),
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_selftest(args):
    return EXIT_OK if run_selftest() else EXIT_COMPUTE


def build_parser():
    p = argparse.ArgumentParser(prog="perihom", description="Effective conductivity of periodised random media.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an ensemble sweep from a config file")
    r.add_argument("config")
    r.add_argument("--threads", type=int, default=None)
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("tensor", help="one effective tensor as JSON")
    t.add_argument("medium", help="config file with a [medium] section, or e.g. 'constant:value=2'")
    t.add_argument("N", type=int)
    t.add_argument("--d", type=int, default=2)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--realization", type=int, default=0)
    t.add_argument("--tol", type=float, default=1e-10)
    kind = t.add_mutually_exclusive_group()
    kind.add_argument("--dual", action="store_true", help="tensor of the dual formula (sigma inverse)")
    kind.add_argument("--nonsym", action="store_true", help="a + E(x) flow with skew E sampled from the medium")
    kind.add_argument("--continuous", action="store_true", help="finite elements with sampled symmetric A(x)")
    t.add_argument("--a", type=float, default=1.0, help="scalar a for --nonsym")
    t.add_argument("--bound", type=float, default=1.0, help="entry bound of E for --nonsym")
    t.add_argument("--rotate", action="store_true", help="random eigenframes for --continuous")
    t.set_defaults(func=cmd_tensor)

    w = sub.add_parser("weyl", help="Weyl decomposition report for a vector field file")
    w.add_argument("field")
    w.set_defaults(func=cmd_weyl)

    s = sub.add_parser("selftest", help="run the built-in invariant checks")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FieldFormatError) as exc:
        print(f"perihom: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"perihom: compute failure: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except ValueError as exc:
        print(f"perihom: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
