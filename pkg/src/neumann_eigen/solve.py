"""Solvers for the discrete problem F_h[u] = lam u + g with the boundary law.

The outer loop is the classical shifted monotone iteration: starting from
``u_1 = 0``, each step solves the properly monotone problem

    F_h[u_{n+1}] + sigma u_{n+1} = g + (sigma + lam) u_n,   sigma = 2c + |lam|,

whose iterates increase when ``g >= 0`` and stay bounded exactly when
``lam`` lies below the principal eigenvalue. The inner (shifted) problem is
solved either by policy iteration on the max/min structure of the scheme
(default) or by lexicographic nonlinear Gauss-Seidel.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretize import DiscreteProblem, Scheme, apply_discrete_operator
from .errors import ConfigurationError, NonConvergenceError
from .operators import structure_constants

__all__ = ["SolveConfig", "SolveReport", "solve_shifted", "solve_neumann", "solve_sign_changing", "zeroth_bound"]

log = logging.getLogger(__name__)


@dataclass
class SolveConfig:
    """Tolerances and limits for :func:`solve_shifted` and :func:`solve_neumann`.

    ``sigma=None`` picks the shift ``2c + |lam|`` from the zeroth-order bound ``c``.
    ``method`` selects the inner solver: ``"policy"`` or ``"gauss_seidel"``.
    """

    sigma: float | None = None
    inner_tol: float = 1e-12
    outer_tol: float = 1e-9
    max_outer: int = 20000
    max_inner: int = 200
    norm_cap: float = 1e8
    method: str = "policy"
    slope_window: int = 5
    max_sweeps: int = 100000

    def __post_init__(self):
        for name in ("inner_tol", "outer_tol", "norm_cap"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ConfigurationError("iteration limits must be at least 1")
        if self.method not in ("policy", "gauss_seidel"):
            raise ConfigurationError(f"unknown inner method {self.method!r}")


@dataclass
class SolveReport:
    status: str
    solution: np.ndarray
    outer_iterations: int
    final_residual: float
    monotone_flag: bool
    sigma: float
    increments: list[float] = field(default_factory=list, repr=False)
    norms: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "residual": self.final_residual,
            "iterations": self.outer_iterations,
            "monotone": self.monotone_flag,
            "sigma": self.sigma,
        }


def zeroth_bound(problem: DiscreteProblem) -> float:
    """Sup-norm over grid nodes of the zeroth-order coefficients of all families."""
    return structure_constants(problem.operator, problem.grid.nodes)[1]


def _sigma(problem: DiscreteProblem, config: SolveConfig) -> float:
    c = zeroth_bound(problem)
    lam = abs(problem.lam)
    if config.sigma is not None:
        if not config.sigma > c + lam:
            raise ConfigurationError(f"shift sigma={config.sigma} must exceed c + |lam| = {c + lam}")
        return float(config.sigma)
    sigma = 2 * c + lam
    if not sigma > c + lam:
        # c == 0: the default would not be strictly proper
        sigma = c + lam + 1.0
    return sigma


class _FactorCache:
    """Small LRU of sparse LU factors keyed by (policy, shift)."""

    def __init__(self, size: int = 6):
        self.size = size
        self.store: OrderedDict = OrderedDict()

    def solve(self, scheme: Scheme, policy: np.ndarray, shift: float, rhs: np.ndarray) -> np.ndarray:
        key = (policy.tobytes(), float(shift))
        lu = self.store.get(key)
        if lu is None:
            J = scheme.policy_matrix(policy) + shift * sp.identity(scheme.nI, format="csr")
            lu = spla.splu(J.tocsc())
            self.store[key] = lu
            if len(self.store) > self.size:
                self.store.popitem(last=False)
        else:
            self.store.move_to_end(key)
        return lu.solve(rhs)


def _cache(scheme: Scheme) -> _FactorCache:
    cache = getattr(scheme, "_factor_cache", None)
    if cache is None:
        cache = _FactorCache()
        scheme._factor_cache = cache
    return cache


def policy_solve(scheme: Scheme, shift: float, rhs_I: np.ndarray, u0_I: np.ndarray | None,
                 tol: float, max_iter: int) -> tuple[np.ndarray, float, bool]:
    """Newton / policy iteration for ``tree(u) + shift u = rhs`` on the reduced system.

    Returns ``(u_I, residual, converged)``.
    """
    cache = _cache(scheme)
    u = np.zeros(scheme.nI) if u0_I is None else np.array(u0_I, dtype=float)
    scale = max(1.0, float(np.max(np.abs(rhs_I), initial=0.0)))
    policy = None
    seen = set()
    res_norm = np.inf
    for _ in range(max_iter + 1):
        V = scheme.reduced_leaf_values(u)
        new = scheme.select(V, current=policy, rtol=4e-15, magnitude=float(np.max(np.abs(u), initial=0.0)))
        res = scheme.combine(V) + shift * u - rhs_I
        res_norm = float(np.max(np.abs(res), initial=0.0))
        if res_norm <= tol * scale:
            return u, res_norm, True
        if policy is not None and np.array_equal(new, policy):
            # linear solve with an unchanged policy is exact up to rounding
            return u, res_norm, res_norm <= 1e3 * tol * max(scale, float(np.max(np.abs(u))))
        key = new.tobytes()
        if key in seen:
            return u, res_norm, False
        seen.add(key)
        policy = new
        u = cache.solve(scheme, policy, shift, rhs_I)
        if not np.all(np.isfinite(u)):
            return u, np.inf, False
    return u, res_norm, False


def _nodewise_root(offsets: np.ndarray, slopes: np.ndarray, groups, inner: str, outer: str) -> float:
    """Root of ``outer_g inner_{l in g} (offsets[l] + slopes[l] t)`` with all slopes positive.

    Each leaf is affine and increasing, so the min of several crosses zero at
    the largest leaf root and the max at the smallest.
    """
    roots = -offsets / slopes
    pick_in = np.max if inner == "min" else np.min
    pick_out = np.max if outer == "min" else np.min
    return float(pick_out([pick_in(roots[g]) for g in groups]))


def gauss_seidel_solve(problem: DiscreteProblem, shift: float, rhs: np.ndarray, u0: np.ndarray | None,
                       tol: float, max_sweeps: int) -> tuple[np.ndarray, float, int]:
    """Lexicographic nonlinear Gauss-Seidel on the full grid.

    Interior nodes solve their scalar equation exactly: it is a min/max tree of
    increasing affine functions of the nodal value. Boundary nodes solve their
    linear boundary equation.
    """
    s = problem.scheme
    n, L = s.n, s.n_leaves
    stacked = s._stacked
    Bm = s.boundary_matrix
    u = np.zeros(n) if u0 is None else np.array(u0, dtype=float)
    interior = problem.grid.interior_mask
    rows = []
    for i in range(n):
        if interior[i]:
            leaf_rows = []
            for l in range(L):
                k = l * n + i
                sl = slice(stacked.indptr[k], stacked.indptr[k + 1])
                idx, dat = stacked.indices[sl], stacked.data[sl]
                diag = float(dat[idx == i].sum())
                leaf_rows.append((idx, dat, diag))
            rows.append(leaf_rows)
        else:
            sl = slice(Bm.indptr[i], Bm.indptr[i + 1])
            idx, dat = Bm.indices[sl], Bm.data[sl]
            rows.append((idx, dat, float(dat[idx == i].sum())))
    diags = {i: np.array([d for _, _, d in rows[i]]) for i in range(n) if interior[i]}
    groups = s._leaf_of
    scale = max(1.0, float(np.max(np.abs(rhs[s.I]), initial=0.0)))

    def full_residual(v):
        r = s.interior_values(v) + shift * v - rhs
        r[s.B] = s.boundary_values(v)
        return float(np.max(np.abs(r)))

    res = full_residual(u)
    for sweep in range(1, max_sweeps + 1):
        for i in range(n):
            if not interior[i]:
                idx, dat, diag = rows[i]
                u[i] -= float(dat @ u[idx]) / diag
                continue
            # leaf l at t: base_l + diag_l (t - u_i); add the shift and move rhs over
            base = np.array([float(dat @ u[idx]) for idx, dat, _ in rows[i]])
            slopes = diags[i] + shift
            u[i] = _nodewise_root(base - diags[i] * u[i] - rhs[i], slopes, groups, s.inner, s.outer)
        res = full_residual(u)
        if res <= tol * scale:
            return u, res, sweep
    raise NonConvergenceError(f"Gauss-Seidel did not reach tolerance in {max_sweeps} sweeps", res)


def solve_shifted(problem: DiscreteProblem, sigma: float, rhs: np.ndarray, config: SolveConfig | None = None,
                  u0: np.ndarray | None = None) -> np.ndarray:
    """Solve ``F_h[u] + sigma u = rhs`` inside, ``B_h[u] = 0`` on the boundary.

    ``problem.lam`` is ignored here; the shift carries all zeroth-order changes.
    """
    config = config or SolveConfig()
    s = problem.scheme
    rhs = np.asarray(rhs, dtype=float)
    if config.method == "gauss_seidel":
        u, _, _ = gauss_seidel_solve(problem, sigma, rhs, u0, config.inner_tol, config.max_sweeps)
        return u
    uI, res, ok = policy_solve(s, sigma, rhs[s.I], None if u0 is None else np.asarray(u0)[s.I],
                               config.inner_tol, config.max_inner)
    if ok:
        return s.lift(uI)
    log.info("policy iteration stalled (residual %.3e); falling back to Gauss-Seidel", res)
    u, _, _ = gauss_seidel_solve(problem, sigma, rhs, s.lift(uI) if np.all(np.isfinite(uI)) else None,
                                 config.inner_tol, config.max_sweeps)
    return u


def _growing(increments: list[float], window: int) -> bool:
    if len(increments) < window + 1:
        return False
    tail = increments[-(window + 1):]
    if min(tail[:-1]) <= 0:
        return False
    ratios = [b / a for a, b in zip(tail[:-1], tail[1:])]
    return all(r > 1.0 for r in ratios) and all(r2 >= r1 - 1e-12 for r1, r2 in zip(ratios[:-1], ratios[1:]))


def solve_neumann(problem: DiscreteProblem, config: SolveConfig | None = None,
                  initial: np.ndarray | None = None) -> SolveReport:
    """Shifted monotone iteration for ``F_h[u] = lam u + g``.

    Status is ``converged`` when the increment and the residual both drop below
    ``outer_tol * max(1, |u|)``, ``diverged`` when ``|u|`` exceeds ``norm_cap`` or grows
    geometrically over ``slope_window`` steps, else ``max_iterations``.
    """
    config = config or SolveConfig()
    sigma = _sigma(problem, config)
    lam, g = problem.lam, problem.rhs
    u = np.zeros(problem.grid.n_nodes) if initial is None else np.array(initial, dtype=float)
    monotone = True
    increments, norms = [], []
    status = "max_iterations"
    res = float(np.max(np.abs(apply_discrete_operator(problem, u))))
    it = 0
    for it in range(1, config.max_outer + 1):
        new = solve_shifted(problem, sigma, g + (sigma + lam) * u, config, u0=u)
        step = new - u
        inc = float(np.max(np.abs(step)))
        slack = config.inner_tol * max(1.0, float(np.max(np.abs(new))))
        if np.min(step) < -slack:
            monotone = False
        u = new
        increments.append(inc)
        norms.append(float(np.max(np.abs(u))))
        if not np.all(np.isfinite(u)) or norms[-1] > config.norm_cap:
            status = "diverged"
            break
        res = float(np.max(np.abs(apply_discrete_operator(problem, u))))
        # the attainable residual scales with |u| (stencil entries ~ 1/h^2 times rounding)
        tol = config.outer_tol * max(1.0, norms[-1])
        if inc <= tol and res <= tol:
            status = "converged"
            break
        if _growing(increments, config.slope_window) and norms[-1] > 1.0:
            status = "diverged"
            break
    res = float(np.max(np.abs(apply_discrete_operator(problem, u)))) if np.all(np.isfinite(u)) else np.inf
    return SolveReport(status, u, it, res, monotone, sigma, increments, norms)


def solve_sign_changing(problem: DiscreteProblem, config: SolveConfig | None = None) -> SolveReport:
    """Solve with a right-hand side of any sign, for ``lam`` below both principal eigenvalues.

    The iteration is started from the negative solution with right-hand side
    ``-|g|_inf``; the iterates then increase towards the solution.
    """
    config = config or SolveConfig()
    gmax = float(np.max(np.abs(problem.rhs)))
    if gmax == 0.0:
        return solve_neumann(problem, config)
    barrier = solve_neumann(problem.with_rhs(np.full(problem.grid.n_nodes, -gmax)), config)
    if barrier.status != "converged":
        raise NonConvergenceError("negative barrier did not converge; lam is not below the lower eigenvalue",
                                  barrier.final_residual, {"status": barrier.status})
    return solve_neumann(problem, config, initial=barrier.solution)
