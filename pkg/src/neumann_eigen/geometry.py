"""Computational domains and uniform grids.

Three domain shapes are supported: an interval, an axis-aligned rectangle and
a ball of radius ``R`` in dimension ``N`` reduced to the radial coordinate.
Grids carry everything the boundary operator needs: outward normals, the
distance to the boundary and a corner flag for rectangles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "Interval",
    "Rectangle",
    "RadialBall",
    "Grid",
    "build_grid",
    "boundary_data",
    "exterior_sphere_holds",
]


@dataclass(frozen=True)
class Interval:
    x0: float
    x1: float

    def __post_init__(self):
        if not self.x0 < self.x1:
            raise ConfigurationError(f"interval needs x0 < x1, got [{self.x0}, {self.x1}]")

    @property
    def dim(self) -> int:
        return 1


@dataclass(frozen=True)
class Rectangle:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ConfigurationError("rectangle needs x0 < x1 and y0 < y1")

    @property
    def dim(self) -> int:
        return 2


@dataclass(frozen=True)
class RadialBall:
    """Ball of radius ``R`` in R^dim, represented on the radial segment [0, R]."""

    R: float
    dim: int

    def __post_init__(self):
        if not self.R > 0:
            raise ConfigurationError(f"ball radius must be positive, got {self.R}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigurationError(f"ball dimension must be an integer >= 1, got {self.dim}")


DomainGeometry = Interval | Rectangle | RadialBall


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform node set over a closed domain.

    Nodes are ordered lexicographically (x index major). ``normals`` holds the
    outward unit normal at boundary nodes and the unit direction towards the
    nearest boundary point at interior nodes.
    """

    domain: DomainGeometry
    shape: tuple[int, ...]
    nodes: np.ndarray
    spacing: tuple[float, ...]
    interior_mask: np.ndarray
    normals: np.ndarray
    distance: np.ndarray
    corner_mask: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return self.spacing[0]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def coord_dim(self) -> int:
        """Number of stored coordinates per node (1 for radial grids)."""
        return self.nodes.shape[1]

    @property
    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask)

    @property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(~self.interior_mask)

    @property
    def is_radial(self) -> bool:
        return isinstance(self.domain, RadialBall)

    def index(self, *ij: int) -> int:
        """Linear index of the node with per-axis indices ``ij``."""
        return int(np.ravel_multi_index(ij, self.shape))

    def metadata(self) -> dict:
        d = self.domain
        if isinstance(d, Interval):
            dom = {"type": "interval", "x0": d.x0, "x1": d.x1}
        elif isinstance(d, Rectangle):
            dom = {"type": "rectangle", "x0": d.x0, "x1": d.x1, "y0": d.y0, "y1": d.y1}
        else:
            dom = {"type": "radial_ball", "R": d.R, "dim": d.dim}
        return {
            "domain": dom,
            "shape": list(self.shape),
            "spacing": list(self.spacing),
            "n_nodes": self.n_nodes,
            "n_interior": int(self.interior_mask.sum()),
            "corners": int(self.corner_mask.sum()),
        }


def build_grid(domain: DomainGeometry, n: int) -> Grid:
    """Build the uniform grid with ``n`` nodes per axis on ``domain``."""
    if int(n) != n or n < 3:
        raise ConfigurationError(f"need at least 3 nodes per axis, got n={n}")
    n = int(n)
    if isinstance(domain, Interval):
        return _interval_grid(domain, n)
    if isinstance(domain, Rectangle):
        return _rectangle_grid(domain, n)
    if isinstance(domain, RadialBall):
        return _radial_grid(domain, n)
    raise ConfigurationError(f"unsupported domain {domain!r}")


def _interval_grid(dom: Interval, n: int) -> Grid:
    x = np.linspace(dom.x0, dom.x1, n)
    h = (dom.x1 - dom.x0) / (n - 1)
    interior = np.ones(n, dtype=bool)
    interior[[0, -1]] = False
    to_left = x - dom.x0
    to_right = dom.x1 - x
    distance = np.minimum(to_left, to_right)
    # ties go to the left endpoint
    normals = np.where(to_left <= to_right, -1.0, 1.0)[:, None]
    distance[[0, -1]] = 0.0
    normals[0, 0], normals[-1, 0] = -1.0, 1.0
    return Grid(dom, (n,), x[:, None], (h,), interior, normals, distance,
                np.zeros(n, dtype=bool))


def _radial_grid(dom: RadialBall, n: int) -> Grid:
    r = np.linspace(0.0, dom.R, n)
    h = dom.R / (n - 1)
    interior = np.ones(n, dtype=bool)
    interior[-1] = False
    distance = dom.R - r
    distance[-1] = 0.0
    normals = np.ones((n, 1))
    return Grid(dom, (n,), r[:, None], (h,), interior, normals, distance,
                np.zeros(n, dtype=bool))


def _rectangle_grid(dom: Rectangle, n: int) -> Grid:
    xs = np.linspace(dom.x0, dom.x1, n)
    ys = np.linspace(dom.y0, dom.y1, n)
    hx = (dom.x1 - dom.x0) / (n - 1)
    hy = (dom.y1 - dom.y0) / (n - 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()

    on_x = (ii == 0) | (ii == n - 1)
    on_y = (jj == 0) | (jj == n - 1)
    interior = ~(on_x | on_y)
    corner = on_x & on_y

    # distances to the four sides, ordered x0, x1, y0, y1
    gaps = np.column_stack([
        nodes[:, 0] - dom.x0, dom.x1 - nodes[:, 0],
        nodes[:, 1] - dom.y0, dom.y1 - nodes[:, 1],
    ])
    gaps[ii == 0, 0] = 0.0
    gaps[ii == n - 1, 1] = 0.0
    gaps[jj == 0, 2] = 0.0
    gaps[jj == n - 1, 3] = 0.0
    side_normals = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
    nearest = np.argmin(gaps, axis=1)
    distance = gaps[np.arange(len(nodes)), nearest]
    normals = side_normals[nearest].copy()

    cidx = np.flatnonzero(corner)
    sx = np.where(ii[cidx] == 0, -1.0, 1.0)
    sy = np.where(jj[cidx] == 0, -1.0, 1.0)
    normals[cidx] = np.column_stack([sx, sy]) / np.sqrt(2.0)
    distance[~interior] = 0.0
    return Grid(dom, (n, n), nodes, (hx, hy), interior, normals, distance, corner)


def boundary_data(grid: Grid, node: int) -> tuple[np.ndarray, float]:
    """Return ``(normal, distance)`` at ``node``.

    Boundary nodes give the outward normal and 0; interior nodes give the unit
    direction towards the nearest boundary point and ``d(x)``.
    """
    if not 0 <= node < grid.n_nodes:
        raise IndexError(f"node {node} outside grid of {grid.n_nodes} nodes")
    return grid.normals[node].copy(), float(grid.distance[node])


def exterior_sphere_holds(grid: Grid, r: float, atol: float = 1e-12) -> bool:
    """Check ``<n(x), y - x> <= |y - x|^2 / (2 r)`` for boundary x and all nodes y."""
    if r <= 0:
        raise ConfigurationError("exterior sphere radius must be positive")
    for b in grid.boundary:
        diff = grid.nodes - grid.nodes[b]
        lhs = diff @ grid.normals[b]
        rhs = np.einsum("ij,ij->i", diff, diff) / (2.0 * r)
        if np.any(lhs > rhs + atol):
            return False
    return True
