"""Command line entry point: ``neumann-eigen {solve,eigen,bounds,verify,beta2}``.

Exit codes: 0 on success, 1 on numerical non-convergence, 2 on configuration
or parse errors (message on stderr).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import build_problem, config_hash, eigen_config, load_config, solve_config
from .discretize import certify_solution_class
from .eigen import beta2_threshold, constant_bounds, dirichlet_eigenvalue, principal_eigenfunction
from .errors import ConfigurationError, NonConvergenceError
from .solve import solve_neumann

__all__ = ["main", "write_grid_function", "read_grid_function"]


def write_grid_function(path, grid, values) -> None:
    """CSV with one row per node: coordinates then value, full precision."""
    names = ["x", "y"][: grid.coord_dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["u"])
        for point, v in zip(grid.nodes, values):
            w.writerow([repr(float(c)) for c in point] + [repr(float(v))])


def read_grid_function(path, grid) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigurationError(f"cannot read grid function {path}: {exc}") from exc
    if not rows or rows[0][-1] != "u":
        raise ConfigurationError(f"{path}: expected a header ending in 'u'")
    body = rows[1:]
    if len(body) != grid.n_nodes:
        raise ConfigurationError(f"{path}: {len(body)} rows for a grid of {grid.n_nodes} nodes")
    try:
        data = np.array([[float(c) for c in r] for r in body])
    except ValueError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    if not np.allclose(data[:, :-1], grid.nodes, rtol=0, atol=1e-9):
        raise ConfigurationError(f"{path}: node coordinates do not match the configured grid")
    return data[:, -1]


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _header(doc: dict, grid) -> dict:
    return {"config_hash": config_hash(doc), "grid": grid.metadata()}


def _cmd_solve(args) -> int:
    doc = load_config(args.config)
    problem = build_problem(doc, lam=args.lam)
    report = solve_neumann(problem, solve_config(doc))
    if args.out:
        write_grid_function(args.out, problem.grid, report.solution)
    _emit(report.to_dict() | _header(doc, problem.grid))
    return 0 if report.status == "converged" else 1


def _estimate_dict(est) -> dict:
    return {
        "lambda": est.lam,
        "bracket": [est.bracket[0], est.bracket[1]],
        "residual": est.residual,
        "probes": est.probes,
        "indeterminate": est.indeterminate,
        "wall_time": est.wall_time,
    }


def _cmd_eigen(args) -> int:
    doc = load_config(args.config)
    problem = build_problem(doc)
    cfg = eigen_config(doc)
    out = Path(args.out) if args.out else None
    which = ["bar", "under"] if args.which == "both" else [args.which]
    result = _header(doc, problem.grid)
    csv_paths = {}
    for w in which:
        est = dirichlet_eigenvalue(problem, cfg) if w == "dirichlet" else principal_eigenfunction(problem, w, cfg)
        result[f"lambda_{w}"] = _estimate_dict(est)
        if out is not None and est.eigenfunction is not None:
            path = out.with_name(f"{out.stem}_{w}.csv")
            write_grid_function(path, problem.grid, est.eigenfunction)
            csv_paths[w] = str(path)
    result["eigenfunction_csv"] = csv_paths
    if out is not None:
        out.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    _emit(result)
    return 0


def _cmd_bounds(args) -> int:
    doc = load_config(args.config)
    problem = build_problem(doc)
    lo, hi = constant_bounds(problem)
    _emit({"lo": lo, "hi": hi} | _header(doc, problem.grid))
    return 0


def _cmd_verify(args) -> int:
    doc = load_config(args.config)
    problem = build_problem(doc, lam=args.lam)
    u = read_grid_function(args.function, problem.grid)
    tol = solve_config(doc).outer_tol if args.tol is None else args.tol
    report = certify_solution_class(problem, u, args.mode, tol)
    _emit(report.to_dict() | _header(doc, problem.grid))
    return 0


def _cmd_beta2(args) -> int:
    value = beta2_threshold(args.a, args.A, args.dim, args.R, args.rho, args.beta1, args.k)
    print(repr(value))
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="neumann-eigen", description="Principal eigenvalues of nonlinear Neumann problems.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve F[u] = lam u + g with the configured boundary law")
    p.add_argument("--config", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("eigen", help="principal eigenvalues and eigenfunctions")
    p.add_argument("--config", required=True)
    p.add_argument("--which", choices=["bar", "under", "both", "dirichlet"], default="both")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eigen)

    p = sub.add_parser("bounds", help="explicit eigenvalue bracket from exponential barriers")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("verify", help="certify a grid function as a sub- or supersolution")
    p.add_argument("--config", required=True)
    p.add_argument("--function", required=True)
    p.add_argument("--mode", choices=["sub", "super"], required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--tol", type=float)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("beta2", help="admissible depth of the negative zeroth-order well")
    for name, kind in (("a", float), ("A", float), ("dim", int), ("R", float), ("rho", float),
                       ("beta1", float), ("k", float)):
        p.add_argument(f"--{name}", type=kind, required=True)
    p.set_defaults(func=_cmd_beta2)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ZeroDivisionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
