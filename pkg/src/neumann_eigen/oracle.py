"""Brute-force reference eigenpairs for linear problems.

The matrix is assembled node by node into a dense array with plain loops,
sharing no code with the sparse scheme compiler. Boundary unknowns are
eliminated through the discrete boundary law, so the reduced matrix acts on
interior values only. The principal pair is found by power iteration on the
resolvent ``(M - s I)^-1`` with ``s`` below every Gershgorin disc.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .discretize import DiscreteProblem
from .errors import NonConvergenceError, UnsupportedOperatorError
from .geometry import Grid, RadialBall, Rectangle
from .operators import Dirichlet, Linear

__all__ = ["LinearSystemMatrix", "linear_system_matrix", "linear_reference_eigen", "tridiagonal_dirichlet_eigenvalue"]


@dataclass
class LinearSystemMatrix:
    """Dense reduced matrix on interior nodes plus the map back to all nodes."""

    matrix: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    elimination: np.ndarray  # boundary values = elimination @ interior values

    def lift(self, v: np.ndarray, n: int) -> np.ndarray:
        u = np.zeros(n)
        u[self.interior] = v
        if len(self.boundary):
            u[self.boundary] = self.elimination @ v
        return u


def _neighbor(grid: Grid, k: int, offset) -> int:
    sub = np.unravel_index(k, grid.shape)
    return int(np.ravel_multi_index(tuple(s + o for s, o in zip(sub, offset)), grid.shape))


def _drift_entries(row: dict, grid: Grid, k: int, axis: int, b: float, a_eff: float):
    h = grid.spacing[axis]
    off = [0] * len(grid.shape)
    off[axis] = 1
    up = _neighbor(grid, k, off)
    down = _neighbor(grid, k, [-o for o in off])
    if b == 0:
        return
    if abs(b) * h <= a_eff:
        row[up] = row.get(up, 0.0) + b / (2 * h)
        row[down] = row.get(down, 0.0) - b / (2 * h)
    elif b > 0:
        row[k] = row.get(k, 0.0) + b / h
        row[down] = row.get(down, 0.0) - b / h
    else:
        row[up] = row.get(up, 0.0) + b / h
        row[k] = row.get(k, 0.0) - b / h


def _interior_row(grid: Grid, op: Linear, k: int) -> dict:
    x = grid.nodes[k]
    row: dict[int, float] = {}
    diff = [float(d(x)) for d in op.diffusion]
    if isinstance(grid.domain, RadialBall):
        N, h, r = grid.domain.dim, grid.h, float(x[0])
        a = diff[0]
        if k == 0:
            row[0] = row.get(0, 0.0) + 2 * N * a / h ** 2
            row[1] = row.get(1, 0.0) - 2 * N * a / h ** 2
        else:
            row[k - 1] = row.get(k - 1, 0.0) - a / h ** 2
            row[k + 1] = row.get(k + 1, 0.0) - a / h ** 2
            row[k] = row.get(k, 0.0) + 2 * a / h ** 2
            if N > 1:
                m = N - 1
                if r >= m * h:
                    row[k + 1] -= a * m / (2 * h * r)
                    row[k - 1] += a * m / (2 * h * r)
                else:
                    row[k + 1] -= a * m / (h * r)
                    row[k] += a * m / (h * r)
    else:
        nax = len(grid.shape)
        if len(diff) == 1:
            diff = diff * nax
        for ax in range(nax):
            h = grid.spacing[ax]
            off = [0] * nax
            off[ax] = 1
            for nb in (_neighbor(grid, k, off), _neighbor(grid, k, [-o for o in off])):
                row[nb] = row.get(nb, 0.0) - diff[ax] / h ** 2
            row[k] = row.get(k, 0.0) + 2 * diff[ax] / h ** 2
    for ax, b in enumerate(op.drift):
        _drift_entries(row, grid, k, ax, float(b(x)), diff[min(ax, len(diff) - 1)])
    row[k] = row.get(k, 0.0) + float(op.zeroth(x))
    return row


def _boundary_row(grid: Grid, law, k: int, two_point: bool = False) -> dict:
    if isinstance(law, Dirichlet):
        return {k: 1.0}
    x = grid.nodes[k]
    normal = grid.normals[k]
    if isinstance(grid.domain, RadialBall) or len(grid.shape) == 1:
        step = [-1 if normal[0] > 0 else 1]
    else:
        step = [int(-np.sign(round(c, 12))) for c in normal]
    s = float(np.sqrt(sum((st * h) ** 2 for st, h in zip(step, grid.spacing))))
    one = _neighbor(grid, k, step)
    if two_point:
        return {k: float(law.gamma(x)) + 1.0 / s, one: -1.0 / s}
    two = _neighbor(grid, k, [2 * st for st in step])
    row = {k: float(law.gamma(x)) + 1.5 / s}
    row[one] = row.get(one, 0.0) - 2.0 / s
    row[two] = row.get(two, 0.0) + 0.5 / s
    return row


def linear_system_matrix(problem: DiscreteProblem) -> LinearSystemMatrix:
    """Dense reduced matrix of a :class:`Linear` problem (``lam`` and ``rhs`` ignored)."""
    op = problem.operator
    if not isinstance(op, Linear):
        raise UnsupportedOperatorError(f"the reference eigensolver handles Linear operators only, got {type(op).__name__}")
    grid = problem.grid
    n = grid.n_nodes
    I = np.flatnonzero(grid.interior_mask)
    B = np.flatnonzero(~grid.interior_mask)
    interior_rows = {int(k): _interior_row(grid, op, int(k)) for k in I}
    two_point: set[int] = set()
    while True:
        full = np.zeros((n, n))
        for k in range(n):
            if grid.interior_mask[k]:
                row = interior_rows[k]
            else:
                row = _boundary_row(grid, problem.boundary, k, k in two_point)
            for j, v in row.items():
                full[k, j] += v
        if not len(B):
            E = np.zeros((0, len(I)))
            M = full[np.ix_(I, I)]
            break
        E = -np.linalg.solve(full[np.ix_(B, B)], full[np.ix_(B, I)])
        M = full[np.ix_(I, I)] + full[np.ix_(I, B)] @ E
        if isinstance(problem.boundary, Dirichlet):
            break
        # switch to the two-point row any boundary node that breaks the Z-matrix sign pattern
        scale = np.abs(full[I]).sum(axis=1)
        culprits = set()
        for i, j in np.argwhere(M > 1e-12 * scale[:, None]):
            if i == j:
                continue
            for kb, b in enumerate(B):
                if full[I[i], b] != 0 and E[kb, j] < 0:
                    culprits.add(int(b))
        culprits -= two_point
        if not culprits:
            break
        two_point |= culprits
    return LinearSystemMatrix(M, I, B, E)


def linear_reference_eigen(problem: DiscreteProblem, tol: float = 1e-14,
                           max_iter: int = 200000) -> tuple[float, np.ndarray]:
    """Smallest-real-part eigenvalue and positive sup-normalized eigenvector.

    Returns ``(lambda, eigenvector)`` with the eigenvector on all grid nodes.
    """
    system = linear_system_matrix(problem)
    M = system.matrix
    m = M.shape[0]
    radius = np.abs(M).sum(axis=1) - np.abs(np.diag(M))
    s = float(np.min(np.diag(M) - radius)) - 1.0
    lu = sla.lu_factor(M - s * np.eye(m))
    v = np.ones(m)
    mu_prev = np.nan
    history = []
    for _ in range(max_iter):
        w = sla.lu_solve(lu, v)
        theta = w[np.argmax(np.abs(w))]
        w = w / theta
        mu = s + 1.0 / theta
        history.append(mu)
        if abs(mu - mu_prev) <= tol * max(1.0, abs(mu)) and np.max(np.abs(w - v)) <= 1e2 * tol:
            v = w
            break
        v, mu_prev = w, mu
    else:
        raise NonConvergenceError("resolvent power iteration did not settle; the dominant pair may be complex",
                                  diagnostics={"last_estimates": history[-2:]})
    if np.min(v) < 0:
        v = -v
    u = system.lift(v, problem.grid.n_nodes)
    return float(mu), u / np.max(np.abs(u))


def tridiagonal_dirichlet_eigenvalue(h: float) -> float:
    """Smallest eigenvalue of the 3-point ``-u''`` matrix with Dirichlet ends."""
    return 2.0 / h ** 2 * (1.0 - np.cos(np.pi * h))
