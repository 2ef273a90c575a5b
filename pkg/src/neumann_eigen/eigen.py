"""Principal eigenvalues and eigenfunctions of the discrete Neumann problem.

The upper eigenvalue is the threshold below which ``F_h[u] = lam u + 1`` has
a positive solution. It is located by bisection on a feasibility probe,
started from the explicit barrier bracket of :func:`constant_bounds` and
refined by a secant step on ``1 / |u(lam)|``, which vanishes linearly as
``lam`` approaches the eigenvalue from below. The lower eigenvalue is the
upper one of the dual operator ``-F(x, -r, -p, -X)``.

Probes use the max/min structure of the scheme. For a concave scheme (a
pointwise minimum of linear stencils) Howard's iteration either reaches the
positive solution, or meets a stencil ``L`` whose system ``(L - lam) u = 1``
has no positive solution, which proves ``lam >= lambda_1(L) >= lambda_bar``.
For a convex scheme any stencil with a positive solution already gives a
positive supersolution; otherwise the stencil is improved along its Perron
vector until the Perron value exceeds ``lam`` or the policy is stable, in
which case the Perron vector is an eigenfunction with eigenvalue ``<= lam``.
Non-convex Isaacs schemes fall back to the monotone iteration.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretize import DiscreteProblem, Scheme, apply_discrete_operator
from .errors import ConfigurationError, NonConvergenceError
from .operators import Dirichlet, Robin, dual_operator, evaluate_operator
from .solve import SolveConfig, solve_neumann

__all__ = [
    "EigenConfig",
    "EigenEstimate",
    "ProbeResult",
    "feasibility_probe",
    "constant_bounds",
    "principal_eigenvalues",
    "principal_eigenfunction",
    "principal_eigenvalue",
    "dirichlet_eigenvalue",
    "beta2_threshold",
    "probes_monotone",
]

FEASIBLE, INFEASIBLE, INDETERMINATE = "feasible", "infeasible", "indeterminate"


@dataclass
class EigenConfig:
    bisect_tol: float = 1e-8
    eig_tol: float = 1e-9
    lambda_lo: float | None = None
    lambda_hi: float | None = None
    ladder_step: float = 0.1
    ladder_ratio: float = 0.5
    max_rungs: int = 80
    max_policy: int = 500
    probe_method: str = "policy"
    refine: bool = True
    solve: SolveConfig = field(default_factory=SolveConfig)

    def __post_init__(self):
        if not (self.bisect_tol > 0 and self.eig_tol > 0 and self.ladder_step > 0):
            raise ConfigurationError("eigen tolerances and ladder step must be positive")
        if not 0 < self.ladder_ratio < 1:
            raise ConfigurationError("ladder_ratio must lie in (0, 1)")
        if self.probe_method not in ("policy", "iteration"):
            raise ConfigurationError(f"unknown probe method {self.probe_method!r}")


@dataclass
class ProbeResult:
    status: str
    lam: float
    solution: np.ndarray | None = None
    norm: float = math.nan
    certificate: str = ""


@dataclass
class EigenEstimate:
    lam: float
    eigenfunction: np.ndarray | None
    residual: float
    bracket: tuple[float, float]
    probes: int
    wall_time: float
    which: str = "bar"
    indeterminate: int = 0
    history: list[tuple[float, str]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "bracket": [self.bracket[0], self.bracket[1]],
            "residual": self.residual,
            "probes": self.probes,
            "indeterminate": self.indeterminate,
            "wall_time": self.wall_time,
        }


# --------------------------------------------------------------------- probes

def _factor(M: sp.csr_matrix):
    try:
        return spla.splu(M.tocsc())
    except RuntimeError:  # exactly singular
        return None


def _shifted(scheme: Scheme, policy: np.ndarray, lam: float) -> sp.csr_matrix:
    return scheme.policy_matrix(policy) - lam * sp.identity(scheme.nI, format="csr")


def _solve_policy(scheme, policy, lam, rhs):
    lu = _factor(_shifted(scheme, policy, lam))
    if lu is None:
        return None
    u = lu.solve(rhs)
    return u if np.all(np.isfinite(u)) else None


def perron_pair(M: sp.csr_matrix, tol: float = 1e-13, max_iter: int = 20000) -> tuple[float, np.ndarray]:
    """Smallest real eigenvalue and positive eigenvector of an M-matrix-like ``M``.

    Inverse iteration with a Gershgorin shift below the spectrum.
    """
    M = M.tocsr()
    diag = M.diagonal()
    off = np.asarray(abs(M).sum(axis=1)).ravel() - np.abs(diag)
    s = float(np.min(diag - off)) - 1.0
    lu = spla.splu((M - s * sp.identity(M.shape[0], format="csr")).tocsc())
    x = np.ones(M.shape[0])
    mu = np.inf
    for _ in range(max_iter):
        y = lu.solve(x)
        theta = np.max(np.abs(y))
        y /= theta
        new_mu = s + 1.0 / theta
        if abs(new_mu - mu) <= tol * (1.0 + abs(new_mu)) and np.max(np.abs(y - x)) <= 1e3 * tol:
            return new_mu, y
        x, mu = y, new_mu
    return mu, x


def _tie_tol(scheme, u):
    # leaf values closer than a few ulps of the stencil applied to u are ties
    return 4e-15 * scheme._row_scale * float(np.max(np.abs(u))) + 1e-300


def _pick(values, allowed, mode, current=None, tol=None):
    """Best allowed leaf per node; ties within ``tol`` keep ``current``."""
    v = np.where(allowed, values, np.inf if mode == "min" else -np.inf)
    k = v.argmin(axis=0) if mode == "min" else v.argmax(axis=0)
    if current is not None:
        cols = np.arange(v.shape[1])
        keep = allowed[current, cols] & (np.abs(v[current, cols] - v[k, cols]) <= tol)
        k = np.where(keep, current, k)
    return k


def _howard_min(scheme, allowed, lam, max_iter):
    """Probe for the concave operator min over allowed leaves."""
    rhs = np.ones(scheme.nI)
    u = np.ones(scheme.nI)
    policy = _pick(scheme.reduced_leaf_values(u), allowed, "min")
    for _ in range(max_iter):
        nxt = _solve_policy(scheme, policy, lam, rhs)
        if nxt is None or np.min(nxt) <= 0:
            return INFEASIBLE, None, "stencil without positive solution"
        u = nxt
        new = _pick(scheme.reduced_leaf_values(u), allowed, "min", policy, _tie_tol(scheme, u))
        if np.array_equal(new, policy):
            return FEASIBLE, u, "positive solution"
        policy = new
    return INDETERMINATE, None, "policy limit"


def _newton_max(scheme, allowed, lam, max_iter):
    """Probe for the convex operator max over allowed leaves."""
    rhs = np.ones(scheme.nI)
    policy = _pick(scheme.reduced_leaf_values(np.ones(scheme.nI)), allowed, "max")
    for _ in range(max_iter):
        u = _solve_policy(scheme, policy, lam, rhs)
        if u is not None and np.min(u) > 0:
            # positive supersolution found; Newton now decreases to the solution
            for _ in range(max_iter):
                new = _pick(scheme.reduced_leaf_values(u), allowed, "max", policy, _tie_tol(scheme, u))
                if np.array_equal(new, policy):
                    return FEASIBLE, u, "positive solution"
                policy = new
                u = _solve_policy(scheme, policy, lam, rhs)
                if u is None or np.min(u) <= 0:
                    break
            return INDETERMINATE, None, "Newton lost positivity"
        mu, phi = perron_pair(scheme.policy_matrix(policy))
        new = _pick(scheme.reduced_leaf_values(phi), allowed, "max", policy, _tie_tol(scheme, phi))
        if np.array_equal(new, policy):
            return INFEASIBLE, None, f"eigenfunction with eigenvalue {mu!r}"
        policy = new
    return INDETERMINATE, None, "policy limit"


def _majorant(scheme, values, current=None, tol=None):
    """Allowed-leaf mask of a convex operator above the tree, touching it at ``values``.

    For max-of-min one leaf per group (the group minimizer) stays; for
    min-of-max the whole minimizing group stays.
    """
    L, m = values.shape
    cols = np.arange(m)
    mask = np.zeros((L, m), dtype=bool)
    groups = scheme._leaf_of
    if scheme.outer == "max":
        for gr in groups:
            sub = np.zeros((L, m), dtype=bool)
            sub[gr] = True
            cur = None
            if current is not None:
                inside = current[gr]
                cur = np.where(inside.any(axis=0), gr[inside.argmax(axis=0)], gr[0])
            k = _pick(values, sub, "min", cur, tol)
            mask[k, cols] = True
        return mask
    gmax = np.stack([values[gr].max(axis=0) for gr in groups])
    g = gmax.argmin(axis=0)
    if current is not None:
        cur_g = np.array([next(i for i, gr in enumerate(groups) if current[gr[0], c]) for c in cols])
        keep = np.abs(gmax[cur_g, cols] - gmax[g, cols]) <= tol
        g = np.where(keep, cur_g, g)
    for i, gr in enumerate(groups):
        sel = g == i
        mask[np.ix_(gr, np.flatnonzero(sel))] = True
    return mask


def _probe_game(scheme, lam, max_iter):
    """Max-min trees: improve the minimizing player's choice over convex majorants.

    An infeasible majorant certifies infeasibility; a stable choice means the
    majorant's positive solution solves the full scheme.
    """
    u = np.ones(scheme.nI)
    allowed = _majorant(scheme, scheme.reduced_leaf_values(u))
    for _ in range(max_iter):
        status, uI, why = _newton_max(scheme, allowed, lam, max_iter)
        if status != FEASIBLE:
            return status, None, f"convex majorant: {why}"
        u = uI
        new = _majorant(scheme, scheme.reduced_leaf_values(u), allowed, _tie_tol(scheme, u))
        if np.array_equal(new, allowed):
            return FEASIBLE, u, "positive solution"
        allowed = new
    return INDETERMINATE, None, "policy limit"


def _probe_policy(scheme: Scheme, lam: float, max_iter: int) -> ProbeResult:
    every = np.ones((scheme.n_leaves, scheme.nI), dtype=bool)
    if scheme.structure in ("linear", "concave"):
        status, uI, why = _howard_min(scheme, every, lam, max_iter)
    elif scheme.structure == "convex":
        status, uI, why = _newton_max(scheme, every, lam, max_iter)
    else:
        status, uI, why = _probe_game(scheme, lam, max_iter)
    if status == FEASIBLE:
        return ProbeResult(FEASIBLE, lam, scheme.lift(uI), float(np.max(uI)), why)
    return ProbeResult(status, lam, certificate=why)


def _probe_iteration(problem: DiscreteProblem, lam: float, config: SolveConfig) -> ProbeResult:
    p = problem.with_lambda(lam).with_rhs(np.ones(problem.grid.n_nodes))
    rep = solve_neumann(p, config)
    if rep.status == "converged" and np.min(rep.solution) > 0:
        return ProbeResult(FEASIBLE, lam, rep.solution, float(np.max(rep.solution)), "monotone iteration converged")
    if rep.status == "diverged":
        return ProbeResult(INFEASIBLE, lam, certificate="monotone iteration diverged")
    return ProbeResult(INDETERMINATE, lam)


def feasibility_probe(problem: DiscreteProblem, lam: float,
                      config: EigenConfig | SolveConfig | None = None) -> ProbeResult:
    """Decide whether ``F_h[u] = lam u + 1`` has a positive solution.

    ``problem.lam`` and ``problem.rhs`` are ignored. A bare :class:`SolveConfig`
    selects the policy probe with that configuration for the fallback iteration.
    """
    if isinstance(config, SolveConfig):
        config = EigenConfig(solve=config)
    config = config or EigenConfig()
    if config.probe_method == "policy":
        res = _probe_policy(problem.scheme, float(lam), config.max_policy)
        if res.status != INDETERMINATE:
            return res
    return _probe_iteration(problem, float(lam), config.solve)


def probes_monotone(history: list[tuple[float, str]]) -> bool:
    """True when no feasible probe lies above an infeasible one."""
    feas = [lam for lam, st in history if st == FEASIBLE]
    infeas = [lam for lam, st in history if st == INFEASIBLE]
    return not feas or not infeas or max(feas) < min(infeas)


# --------------------------------------------------------------------- bounds

def _sub_rate(problem: DiscreteProblem, g: float) -> float | None:
    """Smallest k >= g with the discrete boundary law of exp(k d) non-positive."""
    if g == 0:
        return 0.0
    s, d = problem.scheme, problem.grid.distance

    def worst(k):
        return float(np.max(s.boundary_values(np.exp(k * d))))

    dmin = float(np.min(d[d > 0]))
    lo, hi = g, math.log(2.0) / dmin
    if worst(lo) <= 0:
        return lo
    if hi <= lo or worst(hi) > 0:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if worst(mid) <= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * hi:
            break
    return hi


def constant_bounds(problem: DiscreteProblem) -> tuple[float, float]:
    """Certified bracket ``lo <= lambda_bar <= hi`` from exponential barriers.

    ``exp(-|gamma| d)`` is a positive supersolution for every ``lam <= lo`` and
    ``exp(k d)`` (``k >= |gamma|`` adjusted so that the discrete boundary law
    holds) a positive subsolution for every ``lam >= hi``. With ``gamma = 0``
    both barriers are constant and the bracket is the range of ``F(x, 1, 0, 0)``.
    """
    if not isinstance(problem.boundary, Robin):
        raise ConfigurationError("constant_bounds needs a Robin/Neumann boundary law")
    grid, s = problem.grid, problem.scheme
    gamma = problem.boundary.gamma.evaluate(grid.nodes[grid.boundary])
    g = float(np.max(np.abs(gamma)))
    d = grid.distance
    I = s.I

    v = np.exp(-g * d)
    lo = float(np.min(s.interior_values(v)[I] / v[I]))
    k = _sub_rate(problem, g)
    if k is None:
        hi = math.inf
    else:
        w = np.exp(k * d)
        hi = float(np.max(s.interior_values(w)[I] / w[I]))
    if g == 0:
        ones = np.zeros(grid.coord_dim)
        at_boundary = [evaluate_operator(problem.operator, grid.nodes[b], 1.0, ones, ones) for b in grid.boundary]
        if at_boundary:
            lo, hi = min(lo, min(at_boundary)), max(hi, max(at_boundary))
    return lo, hi


# --------------------------------------------------------------------- search

class _Search:
    def __init__(self, problem: DiscreteProblem, config: EigenConfig):
        self.problem = problem
        self.config = config
        self.history: list[tuple[float, str]] = []
        self.feasible: dict[float, ProbeResult] = {}
        self.indeterminate = 0

    def probe(self, lam: float) -> bool:
        r = feasibility_probe(self.problem, lam, self.config)
        self.history.append((lam, r.status))
        if r.status == INDETERMINATE:
            self.indeterminate += 1
        if r.status == FEASIBLE:
            self.feasible[lam] = r
            return True
        return False

    def bracket(self, lo: float, hi: float, pad_lo: bool) -> tuple[float, float]:
        cfg = self.config
        pad = max(10 * cfg.bisect_tol, 1e-3 * (1.0 + abs(lo)))
        tries = 0
        while not self.probe(lo):
            if not pad_lo or tries > 60:
                raise ConfigurationError(f"lower bracket end {lo} is not feasible")
            lo -= pad
            pad *= 2
            tries += 1
        if not math.isfinite(hi):
            hi = lo + 1.0
        step = max(1.0, abs(hi - lo))
        tries = 0
        while self.probe(hi):
            lo = hi
            hi += step
            step *= 2
            tries += 1
            if tries > 60:
                raise ConfigurationError("could not find an infeasible upper bracket end")
        return lo, hi

    def bisect(self, lo: float, hi: float) -> tuple[float, float]:
        while hi - lo > self.config.bisect_tol:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if self.probe(mid):
                lo = mid
            else:
                hi = mid
        return lo, hi

    def refine(self, lo: float, hi: float) -> tuple[float, float]:
        """Secant on 1/|u(lam)|, accepted only where probes confirm it."""
        for _ in range(3):
            pts = sorted((lam, 1.0 / r.norm) for lam, r in self.feasible.items() if lam <= lo and r.norm > 0)
            if len(pts) < 2:
                break
            (l1, y1), (l2, y2) = pts[-2], pts[-1]
            if y1 == y2:
                break
            root = l2 + y2 * (l2 - l1) / (y1 - y2)
            if not lo < root < hi:
                break
            delta = 1e-3 * (hi - lo)
            shrunk = False
            if root - delta > lo and self.probe(root - delta):
                lo, shrunk = root - delta, True
            if root + delta < hi and not self.probe(root + delta):
                hi, shrunk = root + delta, True
            if not shrunk:
                break
        return lo, hi


def _eigen_residual(problem: DiscreteProblem, lam: float, phi: np.ndarray) -> float:
    p = problem.with_lambda(lam).with_rhs(np.zeros(problem.grid.n_nodes))
    return float(np.max(np.abs(apply_discrete_operator(p, phi))))


def _ladder(problem: DiscreteProblem, lo: float, config: EigenConfig, step: float | None = None) -> np.ndarray:
    step = config.ladder_step if step is None else step
    prev = None
    diffs = []
    for k in range(config.max_rungs):
        lam = lo - step * config.ladder_ratio ** k
        if lam >= lo:
            break
        r = feasibility_probe(problem, lam, config)
        if r.status != FEASIBLE:
            raise NonConvergenceError(f"ladder rung lam={lam} is not feasible", diagnostics={"status": r.status})
        v = r.solution / np.max(np.abs(r.solution))
        if prev is not None:
            diffs.append(float(np.max(np.abs(v - prev))))
            if diffs[-1] <= config.eig_tol:
                return v
        prev = v
    raise NonConvergenceError("eigenfunction ladder exhausted without Cauchy behaviour",
                              diffs[-1] if diffs else None, {"differences": diffs})


def principal_eigenvalue(problem: DiscreteProblem, config: EigenConfig | None = None, *,
                         with_eigenfunction: bool = True, ladder_step: float | None = None,
                         bounds: tuple[float, float] | None = None) -> EigenEstimate:
    """Upper principal eigenvalue of ``problem`` (its ``lam`` and ``rhs`` are ignored)."""
    config = config or EigenConfig()
    t0 = time.perf_counter()
    search = _Search(problem, config)
    if bounds is None:
        bounds = constant_bounds(problem)
    pad_lo = config.lambda_lo is None
    lo = bounds[0] if config.lambda_lo is None else config.lambda_lo
    hi = bounds[1] if config.lambda_hi is None else config.lambda_hi
    lo, hi = search.bracket(lo, hi, pad_lo)
    lo, hi = search.bisect(lo, hi)
    if config.refine:
        lo, hi = search.refine(lo, hi)
    # the barrier bounds are certified as well; report the midpoint of both intervals' overlap
    clo, chi = max(lo, bounds[0]), min(hi, bounds[1])
    lam = 0.5 * (clo + chi) if clo <= chi else 0.5 * (lo + hi)
    phi, res = None, math.nan
    if with_eigenfunction:
        phi = _ladder(problem, lo, config, ladder_step)
        res = _eigen_residual(problem, lam, phi)
    return EigenEstimate(lam, phi, res, (lo, hi), len(search.history), time.perf_counter() - t0,
                         "bar", search.indeterminate, search.history)


def principal_eigenvalues(problem: DiscreteProblem, config: EigenConfig | None = None,
                          with_eigenfunction: bool = True) -> tuple[EigenEstimate, EigenEstimate]:
    """``(bar, under)`` estimates; ``under`` is computed through the dual operator."""
    if not isinstance(problem.boundary, Robin):
        raise ConfigurationError("principal_eigenvalues needs a Robin/Neumann boundary law")
    bar = principal_eigenvalue(problem, config, with_eigenfunction=with_eigenfunction)
    under = _under(problem, config, with_eigenfunction)
    return bar, under


def _under(problem, config, with_eigenfunction, ladder_step=None):
    dual = problem.with_operator(dual_operator(problem.operator))
    est = principal_eigenvalue(dual, config, with_eigenfunction=with_eigenfunction, ladder_step=ladder_step)
    est.which = "under"
    if est.eigenfunction is not None:
        est.eigenfunction = -est.eigenfunction
        est.residual = _eigen_residual(problem, est.lam, est.eigenfunction)
    return est


def principal_eigenfunction(problem: DiscreteProblem, which: str = "bar", config: EigenConfig | None = None,
                            ladder_step: float | None = None) -> EigenEstimate:
    """Eigenvalue and sup-normalized eigenfunction (positive for ``bar``, negative for ``under``)."""
    if which == "bar":
        return principal_eigenvalue(problem, config, ladder_step=ladder_step)
    if which == "under":
        return _under(problem, config, True, ladder_step)
    raise ValueError(f"which must be 'bar' or 'under', got {which!r}")


def dirichlet_eigenvalue(problem: DiscreteProblem, config: EigenConfig | None = None,
                         with_eigenfunction: bool = True) -> EigenEstimate:
    """Principal eigenvalue with ``u = 0`` on the boundary.

    The search starts from the Neumann (gamma = 0) lower barrier, which lies
    below the Dirichlet eigenvalue, and expands upwards until infeasible.
    """
    neumann = problem.with_boundary(Robin())
    lo, _ = constant_bounds(neumann)
    dproblem = problem if isinstance(problem.boundary, Dirichlet) else problem.with_boundary(Dirichlet())
    est = principal_eigenvalue(dproblem, config, with_eigenfunction=with_eigenfunction, bounds=(lo, math.inf))
    est.which = "dirichlet"
    return est


# ---------------------------------------------------------------- threshold

def beta2_threshold(a: float, A: float, dim: int, R: float, rho: float, beta1: float, k: float) -> float:
    """Largest admissible depth of the negative zeroth-order well in the ball example.

    A radial supersolution with positive eigenvalue exists whenever the
    negative part of ``c_0`` on ``|x| <= rho`` stays above ``-beta2`` with
    ``beta2`` below this value.
    """
    if not (0 < rho < R):
        raise ConfigurationError("need 0 < rho < R")
    if not (0 < a <= A):
        raise ConfigurationError("need 0 < a <= A")
    if not (beta1 > 0 and k > 0):
        raise ConfigurationError("need beta1 > 0 and k > 0")
    if int(dim) != dim or dim < 1:
        raise ConfigurationError("dimension must be a positive integer")
    N = dim
    num = k * math.exp(-k * rho) * a * (k + (N - 1) / rho)
    den = (k * (R - rho) / 4
           + k * (2 * N * A * R - (N - 1) * a * (R + rho)) / (beta1 * R * (R - rho))
           + 1 - math.exp(-k * rho))
    return num / den
