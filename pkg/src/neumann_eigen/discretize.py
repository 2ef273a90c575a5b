"""Monotone finite differences for F and the boundary law.

Every supported operator becomes, after discretization, a pointwise
max/min of *linear* stencils (``leaves``):

* linear families contribute one leaf each;
* a Pucci operator contributes one leaf per (frame, sign pattern) pair, since
  ``M+_h = max_frames sum_i max(A d_i, a d_i)`` expands into a maximum of
  linear combinations of the directional second differences ``d_i``.

At a node, the residual of the interior equation is the value of that tree
minus ``lam * u - g``. Boundary nodes carry the discrete boundary law
``gamma u + (3 u_0 - 4 u_1 + u_2) / (2 s)`` taken along the inward normal line.
Solvers work on the *reduced* system in which boundary values are eliminated
through that linear relation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import CoefficientField, as_coefficient
from .errors import ConfigurationError
from .geometry import Grid, RadialBall, Rectangle
from .operators import (
    Bellman,
    BoundaryLaw,
    Dirichlet,
    Isaacs,
    Linear,
    OperatorSpec,
    PucciMinus,
    PucciPlus,
    Robin,
    check_ellipticity,
)

__all__ = [
    "DiscreteProblem",
    "Scheme",
    "CertificateReport",
    "compile_scheme",
    "apply_discrete_operator",
    "apply_discrete_boundary",
    "certify_solution_class",
]


def _csr(rows, cols, vals, n) -> sp.csr_matrix:
    m = sp.coo_matrix((np.asarray(vals, float), (np.asarray(rows), np.asarray(cols))), shape=(n, n))
    m = m.tocsr()
    m.sum_duplicates()
    return m


class _Stencils:
    """Raw difference matrices (interior rows only) for one grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.n = grid.n_nodes
        self.I = grid.interior
        if isinstance(grid.domain, Rectangle):
            hx, hy = grid.spacing
            if not np.isclose(hx, hy, rtol=1e-12, atol=0.0):
                raise ConfigurationError("rectangle grids need square cells (equal spacing per axis)")

    def shifted(self, idx, offset):
        """Indices of nodes displaced by ``offset`` grid steps from ``idx``."""
        sub = np.unravel_index(idx, self.grid.shape)
        moved = tuple(s + o for s, o in zip(sub, offset))
        return np.ravel_multi_index(moved, self.grid.shape)

    def second(self, offset, step):
        """(u(x+v) - 2u(x) + u(x-v)) / step^2 at interior nodes."""
        I = self.I
        fwd, bwd = self.shifted(I, offset), self.shifted(I, tuple(-o for o in offset))
        w = 1.0 / step ** 2
        rows = np.concatenate([I, I, I])
        cols = np.concatenate([fwd, bwd, I])
        vals = np.concatenate([np.full(len(I), w), np.full(len(I), w), np.full(len(I), -2 * w)])
        return _csr(rows, cols, vals, self.n)

    def first(self, axis, kind, nodes=None):
        """First difference along ``axis`` at ``nodes``: centered, forward or backward."""
        I = self.I if nodes is None else nodes
        off = [0] * len(self.grid.shape)
        off[axis] = 1
        fwd = self.shifted(I, tuple(off))
        bwd = self.shifted(I, tuple(-o for o in off))
        h = self.grid.spacing[axis]
        if kind == "centered":
            return _csr(np.r_[I, I], np.r_[fwd, bwd], np.r_[np.full(len(I), 0.5 / h), np.full(len(I), -0.5 / h)], self.n)
        if kind == "forward":
            return _csr(np.r_[I, I], np.r_[fwd, I], np.r_[np.full(len(I), 1 / h), np.full(len(I), -1 / h)], self.n)
        return _csr(np.r_[I, I], np.r_[I, bwd], np.r_[np.full(len(I), 1 / h), np.full(len(I), -1 / h)], self.n)


@dataclass
class _Direction:
    """Curvature matrix for one direction of one frame, multiplicity folded in."""

    matrix: sp.csr_matrix


def _upwind_drift(st: _Stencils, b_vals: np.ndarray, axis: int, a_eff: np.ndarray, allow_centered: bool):
    """Drift term diag(b) * p_axis with centered differences where monotone, upwind elsewhere.

    Returns the matrix and the number of interior nodes using upwinding.
    """
    I = st.I
    if isinstance(st.grid.domain, RadialBall):
        # u'(0) = 0 by symmetry, so the drift term vanishes at the centre
        b_vals = b_vals.copy()
        b_vals[0] = 0.0
    b = b_vals[I]
    h = st.grid.spacing[axis]
    centered = (np.abs(b) * h <= a_eff[I]) & allow_centered
    centered |= b == 0
    mats = []
    nup = int(np.count_nonzero(~centered))
    for kind, mask in (("centered", centered & (b != 0)), ("backward", ~centered & (b > 0)),
                       ("forward", ~centered & (b < 0))):
        if np.any(mask):
            D = st.first(axis, kind, I[mask])
            mats.append(sp.diags(b_vals) @ D)
    if not mats:
        return sp.csr_matrix((st.n, st.n)), 0
    return sum(mats[1:], mats[0]).tocsr(), nup


def _radial_directions(st: _Stencils, dim: int, a_eff: float, A_eff: float):
    grid = st.grid
    n, h = st.n, grid.h
    r = grid.nodes[:, 0]
    I = st.I  # 0 .. n-2
    inner = I[I > 0]
    rows, cols, vals = [], [], []
    # u''(r), with the symmetry node using u''(0) = 2 (u_1 - u_0) / h^2 counted dim times
    rows += [0, 0]
    cols += [1, 0]
    vals += [2.0 * dim / h ** 2, -2.0 * dim / h ** 2]
    rows += list(np.r_[inner, inner, inner])
    cols += list(np.r_[inner + 1, inner - 1, inner])
    vals += list(np.r_[np.full(len(inner), 1 / h ** 2), np.full(len(inner), 1 / h ** 2), np.full(len(inner), -2 / h ** 2)])
    e1 = _csr(rows, cols, vals, n)
    dirs = [_Direction(e1)]
    n_forward = 0
    if dim > 1:
        m = dim - 1
        centered = r[inner] >= m * A_eff * h / a_eff
        rc, rf = inner[centered], inner[~centered]
        n_forward = len(rf)
        rows = np.r_[rc, rc, rf, rf]
        cols = np.r_[rc + 1, rc - 1, rf + 1, rf]
        vals = np.r_[m / (2 * h * r[rc]), -m / (2 * h * r[rc]), m / (h * r[rf]), -m / (h * r[rf])]
        dirs.append(_Direction(_csr(rows, cols, vals, n)))
    return dirs, n_forward


def _frames(st: _Stencils, a_eff: float, A_eff: float):
    """Curvature frames: list of lists of directions."""
    grid = st.grid
    if isinstance(grid.domain, RadialBall):
        dirs, nf = _radial_directions(st, grid.domain.dim, a_eff, A_eff)
        return [dirs], nf
    if len(grid.shape) == 1:
        return [[_Direction(st.second((1,), grid.h))]], 0
    h = grid.h
    axis = [_Direction(st.second((1, 0), h)), _Direction(st.second((0, 1), h))]
    diag = [_Direction(st.second((1, 1), h * np.sqrt(2))), _Direction(st.second((1, -1), h * np.sqrt(2)))]
    return [axis, diag], 0


def _direction_set(grid: Grid) -> list[tuple[float, ...]]:
    if len(grid.shape) == 1:
        return [(1.0,)]
    s = 1 / np.sqrt(2)
    return [(1.0, 0.0), (0.0, 1.0), (s, s), (s, -s)]


@dataclass
class Scheme:
    """Compiled discretization of (operator, boundary law) on a grid."""

    grid: Grid
    leaves: list[sp.csr_matrix]
    groups: list[list[int]]
    inner: str
    outer: str
    boundary_matrix: sp.csr_matrix
    elimination: sp.csr_matrix
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        g = self.grid
        self.n = g.n_nodes
        self.I = g.interior
        self.B = g.boundary
        self.nI = len(self.I)
        self.n_leaves = len(self.leaves)
        self._stacked = sp.vstack(self.leaves).tocsr()
        EI = self.elimination
        red = []
        for K in self.leaves:
            KI = K[self.I]
            red.append((KI[:, self.I] + KI[:, self.B] @ EI).tocsr())
        self._reduced = red
        self._stacked_red = sp.vstack(red).tocsr()
        # per-node stencil size, used to judge rounding-level ties between leaves
        self._row_scale = np.max(np.abs(self._stacked_red).sum(axis=1).A.reshape(self.n_leaves, self.nI), axis=0)
        self._leaf_of = [np.asarray(gr) for gr in self.groups]
        singletons = all(len(gr) == 1 for gr in self.groups)
        if self.n_leaves == 1:
            self.structure = "linear"
        elif len(self.groups) == 1:
            self.structure = "concave" if self.inner == "min" else "convex"
        elif singletons:
            self.structure = "concave" if self.outer == "min" else "convex"
        else:
            self.structure = "general"

    # ------------------------------------------------------------------ values
    def leaf_values(self, u: np.ndarray) -> np.ndarray:
        return (self._stacked @ u).reshape(self.n_leaves, self.n)

    def reduced_leaf_values(self, uI: np.ndarray) -> np.ndarray:
        return (self._stacked_red @ uI).reshape(self.n_leaves, self.nI)

    def combine(self, values: np.ndarray) -> np.ndarray:
        inner = np.min if self.inner == "min" else np.max
        outer = np.min if self.outer == "min" else np.max
        per_group = np.stack([inner(values[gr], axis=0) for gr in self._leaf_of])
        return outer(per_group, axis=0)

    def select(self, values: np.ndarray, current: np.ndarray | None = None, rtol: float = 1e-13,
               magnitude: float | None = None) -> np.ndarray:
        """Active leaf per column of ``values``; ties keep ``current`` when given.

        With ``magnitude`` (a bound on ``|u|``) on reduced values, differences
        below ``rtol`` times the stencil size times ``magnitude`` count as ties.
        """
        iarg = np.argmin if self.inner == "min" else np.argmax
        oarg = np.argmin if self.outer == "min" else np.argmax
        picks, gvals = [], []
        for gr in self._leaf_of:
            k = iarg(values[gr], axis=0)
            picks.append(gr[k])
            gvals.append(np.take_along_axis(values[gr], k[None, :], axis=0)[0])
        gvals = np.stack(gvals)
        og = oarg(gvals, axis=0)
        cols = np.arange(values.shape[1])
        leaf = np.stack(picks)[og, cols]
        if current is not None:
            best = gvals[og, cols]
            cur = values[current, cols]
            scale = np.max(np.abs(values), axis=0) + 1e-300
            if magnitude is not None and values.shape[1] == self.nI:
                scale = np.maximum(scale, self._row_scale * magnitude)
            keep = np.abs(cur - best) <= rtol * scale
            leaf = np.where(keep, current, leaf)
        return leaf

    def interior_values(self, u: np.ndarray) -> np.ndarray:
        """Tree value at every node (meaningful on interior nodes only)."""
        return self.combine(self.leaf_values(u))

    # --------------------------------------------------------- linearizations
    def policy_matrix(self, policy: np.ndarray, reduced: bool = True) -> sp.csr_matrix:
        """Linear operator whose row k is the ``policy[k]`` leaf at interior node k."""
        if reduced:
            rows = policy * self.nI + np.arange(self.nI)
            return self._stacked_red[rows]
        rows = policy * self.n + self.I
        return self._stacked[rows]

    def lift(self, uI: np.ndarray) -> np.ndarray:
        u = np.zeros(self.n)
        u[self.I] = uI
        if len(self.B):
            u[self.B] = self.elimination @ uI
        return u

    def boundary_values(self, u: np.ndarray) -> np.ndarray:
        return (self.boundary_matrix @ u)[self.B]


def _pucci_leaves(st: _Stencils, spec, K0: sp.csr_matrix, bounds):
    frames, nf = _frames(st, bounds.a, bounds.A)
    weights = (bounds.a,) if bounds.a == bounds.A else (bounds.a, bounds.A)
    leaves = []
    for frame in frames:
        for combo in itertools.product(weights, repeat=len(frame)):
            M = K0.copy()
            for w, d in zip(combo, frame):
                M = M - w * d.matrix
            leaves.append(M.tocsr())
    return leaves, nf


def _linear_leaf(st: _Stencils, fam: Linear, pts: np.ndarray, zeroth=None):
    grid = st.grid
    n = st.n
    diff = [d.evaluate(pts) for d in fam.diffusion]
    if isinstance(grid.domain, RadialBall):
        if len(diff) != 1:
            raise ConfigurationError("radial grids take a single (isotropic) diffusion field")
        dirs, nf = _radial_directions(st, grid.domain.dim, 1.0, 1.0)
        M = sp.csr_matrix((n, n))
        for d in dirs:
            M = M - sp.diags(diff[0]) @ d.matrix
        a_eff = [diff[0]]
    else:
        nax = len(grid.shape)
        if len(diff) not in (1, nax):
            raise ConfigurationError(f"diffusion needs 1 or {nax} fields, got {len(diff)}")
        if len(diff) == 1:
            diff = diff * nax
        M = sp.csr_matrix((n, n))
        for ax in range(nax):
            off = tuple(1 if k == ax else 0 for k in range(nax))
            M = M - sp.diags(diff[ax]) @ st.second(off, grid.spacing[ax])
        a_eff, nf = diff, 0
    nup = 0
    for ax, b in enumerate(fam.drift):
        bv = b.evaluate(pts)
        D, k = _upwind_drift(st, bv, ax, a_eff[min(ax, len(a_eff) - 1)], True)
        M = M + D
        nup += k
    M = M + sp.diags((fam.zeroth if zeroth is None else zeroth).evaluate(pts))
    # rows of boundary nodes carry no interior equation
    mask = sp.diags(grid.interior_mask.astype(float))
    return (mask @ M).tocsr(), nup, nf


def _boundary_rows(grid: Grid, law: BoundaryLaw, first_order=frozenset()):
    n = grid.n_nodes
    B = grid.boundary
    rows, cols, vals = [], [], []
    if isinstance(law, Dirichlet):
        return _csr(B, B, np.ones(len(B)), n)
    gamma = law.gamma.evaluate(grid.nodes[B])
    if np.any(gamma < 0):
        raise ConfigurationError("Robin coefficient gamma must be non-negative")
    shape = grid.shape
    for b, g in zip(B, gamma):
        sub = np.array(np.unravel_index(b, shape))
        if isinstance(grid.domain, RadialBall) or len(shape) == 1:
            step = np.array([-1 if grid.normals[b, 0] > 0 else 1])
        else:
            step = -np.sign(np.round(grid.normals[b], 12)).astype(int)
        s = float(np.sqrt(np.sum((step * np.asarray(grid.spacing)) ** 2)))
        n1 = np.ravel_multi_index(tuple(sub + step), shape)
        if b in first_order:
            rows += [b, b]
            cols += [b, n1]
            vals += [g + 1 / s, -1 / s]
            continue
        n2 = np.ravel_multi_index(tuple(sub + 2 * step), shape)
        rows += [b, b, b]
        cols += [b, n1, n2]
        vals += [g + 3 / (2 * s), -4 / (2 * s), 1 / (2 * s)]
    return _csr(rows, cols, vals, n)


def _elimination(grid: Grid, Bm: sp.csr_matrix) -> sp.csr_matrix:
    I, B = grid.interior, grid.boundary
    Bb = Bm[B]
    BB = Bb[:, B].tocsc()
    BI = Bb[:, I].tocsc()
    E = spla.spsolve(BB, BI)
    if not sp.issparse(E):
        E = sp.csr_matrix(np.asarray(E).reshape(len(B), len(I)))
    else:
        E = E.tocsr()
    return -E


def compile_scheme(grid: Grid, operator: OperatorSpec, boundary: BoundaryLaw) -> Scheme:
    """Discretize ``operator`` and ``boundary`` on ``grid``."""
    st = _Stencils(grid)
    pts = grid.nodes
    info = {"direction_set": _direction_set(grid), "upwind_nodes": 0, "forward_radial_nodes": 0,
            "corners": int(grid.corner_mask.sum())}
    if len(grid.shape) == 2:
        info["stencil"] = "two-frame (axis + diagonal)"
    if isinstance(operator, (PucciPlus, PucciMinus)):
        n = grid.n_nodes
        K0 = sp.diags(operator.zeroth.evaluate(pts)).tocsr()
        allow_centered = len(grid.shape) == 1
        a = np.full(n, operator.bounds.a)
        for ax, b in enumerate(operator.drift):
            D, k = _upwind_drift(st, b.evaluate(pts), ax, a, allow_centered)
            K0 = K0 + D
            info["upwind_nodes"] += k
        K0 = (sp.diags(grid.interior_mask.astype(float)) @ K0).tocsr()
        leaves, nf = _pucci_leaves(st, operator, K0, operator.bounds)
        info["forward_radial_nodes"] = nf
        inner = "min" if isinstance(operator, PucciPlus) else "max"
        groups, outer = [list(range(len(leaves)))], "max"
    else:
        check_ellipticity(operator, pts)
        if isinstance(operator, Linear):
            fams, groups, inner, outer = [operator], [[0]], "min", "max"
        elif isinstance(operator, Bellman):
            fams = list(operator.families)
            groups, inner, outer = [[k] for k in range(len(fams))], "min", "max"
        elif isinstance(operator, Isaacs):
            fams, groups, k = [], [], 0
            for g in operator.groups:
                groups.append(list(range(k, k + len(g))))
                fams.extend(g)
                k += len(g)
            inner, outer = ("min", "max") if operator.outer == "max" else ("max", "min")
        else:
            raise ConfigurationError(f"unknown operator {operator!r}")
        leaves = []
        for fam in fams:
            M, nup, nf = _linear_leaf(st, fam, pts)
            leaves.append(M)
            info["upwind_nodes"] += nup
            info["forward_radial_nodes"] = max(info["forward_radial_nodes"], nf)
    Bm, E, lowered = _monotone_boundary(grid, boundary, leaves)
    info["first_order_boundary_nodes"] = len(lowered)
    return Scheme(grid, leaves, groups, inner, outer, Bm, E, info)


def _monotone_boundary(grid: Grid, boundary: BoundaryLaw, leaves, max_rounds: int = 50):
    """Boundary rows and elimination keeping every reduced leaf a Z-matrix.

    The three-point Robin row is used wherever possible. A boundary node whose
    elimination puts a positive off-diagonal weight into some reduced interior
    row is switched to the two-point row, whose elimination is nonnegative.
    """
    I, B = grid.interior, grid.boundary
    lowered: set[int] = set()
    for _ in range(max_rounds):
        Bm = _boundary_rows(grid, boundary, frozenset(lowered))
        E = _elimination(grid, Bm)
        if isinstance(boundary, Dirichlet) or not len(B):
            return Bm, E, lowered
        Eneg = (E.minimum(0) if sp.issparse(E) else sp.csr_matrix(np.minimum(E, 0))).tocsr()
        bad: set[int] = set()
        for M in leaves:
            KI = M[I]
            KII = KI[:, I]
            KIB = KI[:, B]
            R = (KII + KIB @ E).tocoo()
            scale = np.asarray(abs(KI).sum(axis=1)).ravel()
            off = (R.row != R.col) & (R.data > 1e-12 * scale[R.row])
            for i, j in zip(R.row[off], R.col[off]):
                row = KIB.getrow(i).tocoo()
                col = Eneg.getcol(j).tocoo()
                culprits = set(row.col[row.data != 0]) & set(col.row)
                bad |= {int(B[k]) for k in culprits}
        bad -= lowered
        if not bad:
            return Bm, E, lowered
        lowered |= bad
    raise ConfigurationError("could not find boundary rows keeping the discrete scheme monotone")


def _as_grid_function(grid: Grid, value) -> np.ndarray:
    if value is None:
        return np.zeros(grid.n_nodes)
    if isinstance(value, np.ndarray):
        arr = np.asarray(value, dtype=float)
        if arr.shape != (grid.n_nodes,):
            raise ConfigurationError(f"grid function needs {grid.n_nodes} values, got shape {arr.shape}")
        return arr.copy()
    return as_coefficient(value).evaluate(grid.nodes)


@dataclass(eq=False)
class DiscreteProblem:
    """Grid + operator + boundary law + spectral shift ``lam`` + right-hand side ``rhs``.

    Encodes ``F_h[u] = lam u + g`` in the interior and ``B_h[u] = 0`` on the boundary.
    ``rhs`` accepts an array, a number, an expression string or a coefficient field.
    """

    grid: Grid
    operator: OperatorSpec
    boundary: BoundaryLaw = field(default_factory=Robin)
    lam: float = 0.0
    rhs: object = None
    scheme: Scheme | None = None

    def __post_init__(self):
        self.rhs = _as_grid_function(self.grid, self.rhs)
        self.lam = float(self.lam)
        if self.scheme is None:
            self.scheme = compile_scheme(self.grid, self.operator, self.boundary)

    @property
    def direction_set(self):
        return self.scheme.info["direction_set"]

    def with_lambda(self, lam: float) -> "DiscreteProblem":
        return replace(self, lam=lam, rhs=self.rhs.copy())

    def with_rhs(self, rhs) -> "DiscreteProblem":
        return replace(self, rhs=rhs)

    def with_boundary(self, boundary: BoundaryLaw) -> "DiscreteProblem":
        return DiscreteProblem(self.grid, self.operator, boundary, self.lam, self.rhs.copy())

    def with_operator(self, operator: OperatorSpec) -> "DiscreteProblem":
        return DiscreteProblem(self.grid, operator, self.boundary, self.lam, self.rhs.copy())


def apply_discrete_operator(problem: DiscreteProblem, u: np.ndarray) -> np.ndarray:
    """Nodewise residual: ``F_h[u] - lam u - g`` inside, ``B_h[u]`` on the boundary."""
    u = np.asarray(u, dtype=float)
    s = problem.scheme
    res = s.interior_values(u) - problem.lam * u - problem.rhs
    res[s.B] = s.boundary_values(u)
    return res


def apply_discrete_boundary(problem: DiscreteProblem, u: np.ndarray, node: int) -> float:
    """Discrete boundary law at a single boundary ``node``."""
    if problem.grid.interior_mask[node]:
        raise ValueError(f"node {node} is not a boundary node")
    row = problem.scheme.boundary_matrix.getrow(node)
    return float((row @ np.asarray(u, dtype=float))[0])


@dataclass
class CertificateReport:
    certified: bool
    mode: str
    tol: float
    worst_node: int
    margin: float
    violations: list[tuple[int, float]]
    min_u: float
    max_u: float

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "mode": self.mode,
            "tol": self.tol,
            "worst_node": self.worst_node,
            "margin": self.margin,
            "violations": [[int(i), float(m)] for i, m in self.violations],
            "min_u": self.min_u,
            "max_u": self.max_u,
        }


def certify_solution_class(problem: DiscreteProblem, u: np.ndarray, mode: str, tol: float = 0.0) -> CertificateReport:
    """Check the discrete sub- or supersolution inequalities at every node.

    ``mode='sub'`` asks for residual <= tol everywhere (interior and boundary),
    ``mode='super'`` for residual >= -tol. ``margin`` is the smallest slack; a
    negative margin beyond ``-tol`` marks a violation.
    """
    if mode not in ("sub", "super"):
        raise ValueError(f"mode must be 'sub' or 'super', got {mode!r}")
    u = np.asarray(u, dtype=float)
    res = apply_discrete_operator(problem, u)
    slack = -res if mode == "sub" else res
    worst = int(np.argmin(slack))
    bad = np.flatnonzero(slack < -tol)
    return CertificateReport(
        certified=bad.size == 0,
        mode=mode,
        tol=tol,
        worst_node=worst,
        margin=float(slack[worst]),
        violations=[(int(i), float(slack[i])) for i in bad],
        min_u=float(u.min()),
        max_u=float(u.max()),
    )
