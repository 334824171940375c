"""Structured tensor-product meshes on rectangles, with optional perforations.

All meshes in this package are tensor products of two strictly increasing
line arrays.  Elements are axis-aligned rectangles, nodes live on the
refined lattice of the chosen polynomial order, and perforated meshes are
realized by deactivating the elements covered by obstacles.  Keeping the
full lattice (with a boolean activity mask) makes trivial zero-extension
of fields, cross-mesh interpolation, and interface extraction cheap and
exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

#: Names of the four rectangle sides, in the order used throughout.
SIDES = ("left", "right", "bottom", "top")

#: Relative tolerance for coordinate comparisons against mesh lines.
LINE_RTOL = 1e-9


@dataclass(frozen=True)
class RectDomain:
    """Axis-aligned rectangle (x0, x1) x (y0, y1).

    Parameters
    ----------
    x0, x1 : float
        Horizontal extent, ``x0 < x1``.
    y0, y1 : float
        Vertical extent, ``y0 < y1``.
    """

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"degenerate domain {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, x, y, tol: float = 0.0) -> np.ndarray:
        """Vectorized membership test with an absolute slack ``tol``."""
        x = np.asarray(x)
        y = np.asarray(y)
        return (
            (x >= self.x0 - tol)
            & (x <= self.x1 + tol)
            & (y >= self.y0 - tol)
            & (y <= self.y1 + tol)
        )


@dataclass(frozen=True)
class ObstacleLattice:
    """Periodic array of grid-aligned square obstacles filling a band.

    Each period-``period`` square cell of the band carries one centered
    square obstacle with side ``s_hat * period``.  The band extents must
    be integer multiples of the period so the cells tile it exactly.

    Parameters
    ----------
    period : float
        Cell edge length (the microscale).
    s_hat : float
        Obstacle side as a fraction of the period, ``0 <= s_hat < 1``.
    band : RectDomain
        Region tiled by the cells.
    """

    period: float
    s_hat: float
    band: RectDomain

    def __post_init__(self):
        if not (0.0 <= self.s_hat < 1.0):
            raise ValueError(f"s_hat must lie in [0, 1), got {self.s_hat}")
        if self.period <= 0.0:
            raise ValueError(f"period must be positive, got {self.period}")
        for extent, axis in ((self.band.width, "x"), (self.band.height, "y")):
            ratio = extent / self.period
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ValueError(
                    f"band {axis}-extent {extent} is not an integer multiple "
                    f"of the period {self.period}"
                )

    @property
    def cells_x(self) -> int:
        return round(self.band.width / self.period)

    @property
    def cells_y(self) -> int:
        return round(self.band.height / self.period)

    @property
    def porosity(self) -> float:
        """Fluid volume fraction of one cell, exact for aligned squares."""
        return 1.0 - self.s_hat**2

    def edge_offsets(self, n_per_cell: int) -> tuple[int, int]:
        """Obstacle edge positions in sub-cell grid units.

        With ``n_per_cell`` mesh elements per cell edge the obstacle edges
        sit at fractions ``(1 - s_hat)/2`` and ``(1 + s_hat)/2`` of the
        cell.  Both must land on mesh lines, i.e. the fractions times
        ``n_per_cell`` must be integers.

        Returns
        -------
        (int, int)
            Lower and upper edge index within the cell.

        Raises
        ------
        ValueError
            If the obstacle edges do not align with the sub-cell grid.
        """
        lo = (1.0 - self.s_hat) / 2.0 * n_per_cell
        hi = (1.0 + self.s_hat) / 2.0 * n_per_cell
        if abs(lo - round(lo)) > 1e-9 or abs(hi - round(hi)) > 1e-9:
            raise ValueError(
                f"obstacle with s_hat={self.s_hat} does not align with "
                f"{n_per_cell} elements per cell; need (1 - s_hat)/2 * "
                f"n_per_cell integral"
            )
        return round(lo), round(hi)


class StructuredMesh:
    """Tensor-product rectangle mesh with nodes of a given order.

    Parameters
    ----------
    xs, ys : ndarray
        Strictly increasing element boundary lines.
    order : int
        Polynomial order of the nodal lattice (1 or 2).
    active : ndarray of bool, optional
        Element activity mask of shape ``(n_elements,)`` in row-major
        ``(ey, ex)`` ordering.  Inactive elements are holes: they carry
        no unknowns and fields evaluate to zero inside them.

    Notes
    -----
    Nodes live on the refined lattice with ``order`` subdivisions per
    element and are numbered row by row with x running fastest.
    """

    def __init__(self, xs, ys, order: int = 1, active=None):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.ndim != 1 or ys.ndim != 1 or xs.size < 2 or ys.size < 2:
            raise ValueError("xs and ys must be 1-d arrays with >= 2 entries")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
            raise ValueError("mesh lines must be strictly increasing")
        if order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {order}")
        self.xs = xs
        self.ys = ys
        self.order = order
        self.nex = xs.size - 1
        self.ney = ys.size - 1
        self.n_elements = self.nex * self.ney
        if active is None:
            active = np.ones(self.n_elements, dtype=bool)
        else:
            active = np.asarray(active, dtype=bool)
            if active.shape != (self.n_elements,):
                raise ValueError("activity mask has wrong shape")
        self.active = active
        # Refined nodal lattice dimensions.
        self.nnx = order * self.nex + 1
        self.nny = order * self.ney + 1
        self.n_nodes = self.nnx * self.nny

    # ------------------------------------------------------------------
    # Geometry
    # ------------------------------------------------------------------

    @property
    def domain(self) -> RectDomain:
        return RectDomain(self.xs[0], self.xs[-1], self.ys[0], self.ys[-1])

    @cached_property
    def hx(self) -> np.ndarray:
        """Element widths, shape ``(nex,)``."""
        return np.diff(self.xs)

    @cached_property
    def hy(self) -> np.ndarray:
        """Element heights, shape ``(ney,)``."""
        return np.diff(self.ys)

    @cached_property
    def node_x(self) -> np.ndarray:
        """x coordinates of the refined node lines, shape ``(nnx,)``."""
        return _refine_lines(self.xs, self.order)

    @cached_property
    def node_y(self) -> np.ndarray:
        """y coordinates of the refined node lines, shape ``(nny,)``."""
        return _refine_lines(self.ys, self.order)

    @cached_property
    def node_coords(self) -> np.ndarray:
        """All node coordinates, shape ``(n_nodes, 2)``."""
        X, Y = np.meshgrid(self.node_x, self.node_y)
        return np.column_stack([X.ravel(), Y.ravel()])

    def element_sizes(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-element (hx, hy), each of shape ``(n_elements,)``."""
        ex, ey = self._element_grid_indices()
        return self.hx[ex], self.hy[ey]

    def _element_grid_indices(self) -> tuple[np.ndarray, np.ndarray]:
        e = np.arange(self.n_elements)
        return e % self.nex, e // self.nex

    @cached_property
    def element_areas(self) -> np.ndarray:
        hx, hy = self.element_sizes()
        return hx * hy

    @property
    def active_area(self) -> float:
        """Total area of active elements."""
        return float(self.element_areas[self.active].sum())

    # ------------------------------------------------------------------
    # Connectivity
    # ------------------------------------------------------------------

    @property
    def nodes_per_element(self) -> int:
        return (self.order + 1) ** 2

    @cached_property
    def element_nodes(self) -> np.ndarray:
        """Global node ids per element, shape ``(n_elements, nloc)``.

        Local nodes follow the tensor ordering with the x index running
        fastest, matching the reference basis in the discretization
        module.
        """
        k = self.order
        ex, ey = self._element_grid_indices()
        base = (k * ey)[:, None] * self.nnx + (k * ex)[:, None]
        jj, ii = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
        local = (jj * self.nnx + ii).ravel()
        return base + local[None, :]

    @cached_property
    def node_active(self) -> np.ndarray:
        """Boolean mask of nodes that touch at least one active element."""
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.element_nodes[self.active].ravel()] = True
        return mask

    @cached_property
    def obstacle_boundary_nodes(self) -> np.ndarray:
        """Nodes shared by active and inactive elements, sorted ids."""
        if self.active.all():
            return np.empty(0, dtype=int)
        dead_touch = np.zeros(self.n_nodes, dtype=bool)
        dead_touch[self.element_nodes[~self.active].ravel()] = True
        return np.flatnonzero(dead_touch & self.node_active)

    # ------------------------------------------------------------------
    # Boundary queries
    # ------------------------------------------------------------------

    def boundary_nodes(self, side: str) -> np.ndarray:
        """Active node ids on one side of the bounding box.

        Nodes are returned sorted along the side (by x for horizontal
        sides, by y for vertical ones).
        """
        if side == "left":
            ids = np.arange(self.nny) * self.nnx
        elif side == "right":
            ids = np.arange(self.nny) * self.nnx + (self.nnx - 1)
        elif side == "bottom":
            ids = np.arange(self.nnx)
        elif side == "top":
            ids = (self.nny - 1) * self.nnx + np.arange(self.nnx)
        else:
            raise ValueError(f"unknown side {side!r}")
        return ids[self.node_active[ids]]

    def boundary_edges(self, side: str) -> np.ndarray:
        """Active elements with an edge on a bounding-box side.

        Returns
        -------
        ndarray
            Element ids, shape ``(n_edges,)``.  The local edge is implied
            by the side name.
        """
        ex, ey = self._element_grid_indices()
        if side == "left":
            sel = ex == 0
        elif side == "right":
            sel = ex == self.nex - 1
        elif side == "bottom":
            sel = ey == 0
        elif side == "top":
            sel = ey == self.ney - 1
        else:
            raise ValueError(f"unknown side {side!r}")
        return np.flatnonzero(sel & self.active)

    def line_index(self, y: float) -> int:
        """Index of the refined node line closest to ``y``.

        Raises
        ------
        ValueError
            If ``y`` is farther from every node line than half the local
            spacing.
        """
        j = int(np.argmin(np.abs(self.node_y - y)))
        spacing = np.diff(self.node_y)
        local = spacing[max(0, j - 1) : j + 1].min()
        if abs(self.node_y[j] - y) > 0.5 * local * (1.0 + 1e-12):
            raise ValueError(f"y={y} does not match a mesh line")
        return j

    # ------------------------------------------------------------------
    # Point location
    # ------------------------------------------------------------------

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Locate points in the mesh.

        Parameters
        ----------
        points : ndarray
            Coordinates, shape ``(n, 2)``.  Points must lie inside the
            bounding box (within a small tolerance).

        Returns
        -------
        elements : ndarray of int
            Containing element per point.
        ref : ndarray
            Reference coordinates in ``[-1, 1]^2``, shape ``(n, 2)``.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        x, y = pts[:, 0], pts[:, 1]
        dom = self.domain
        tol_x = LINE_RTOL * max(1.0, abs(dom.x0), abs(dom.x1))
        tol_y = LINE_RTOL * max(1.0, abs(dom.y0), abs(dom.y1))
        if (
            np.any(x < dom.x0 - tol_x)
            or np.any(x > dom.x1 + tol_x)
            or np.any(y < dom.y0 - tol_y)
            or np.any(y > dom.y1 + tol_y)
        ):
            raise ValueError("points outside the mesh bounding box")
        ex = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, self.nex - 1)
        ey = np.clip(np.searchsorted(self.ys, y, side="right") - 1, 0, self.ney - 1)
        xi = 2.0 * (x - self.xs[ex]) / self.hx[ex] - 1.0
        eta = 2.0 * (y - self.ys[ey]) / self.hy[ey] - 1.0
        ref = np.column_stack([np.clip(xi, -1.0, 1.0), np.clip(eta, -1.0, 1.0)])
        return ey * self.nex + ex, ref


def _refine_lines(lines: np.ndarray, order: int) -> np.ndarray:
    """Insert ``order - 1`` equispaced nodes inside every interval."""
    if order == 1:
        return lines.copy()
    n = lines.size - 1
    out = np.empty(order * n + 1)
    out[::order] = lines
    for s in range(1, order):
        frac = s / order
        out[s::order] = lines[:-1] + frac * np.diff(lines)
    return out


# ----------------------------------------------------------------------
# Builders
# ----------------------------------------------------------------------


def build_rect_mesh(domain: RectDomain, h: float, order: int = 1) -> StructuredMesh:
    """Uniform mesh on a rectangle with target spacing ``h``.

    The spacing is rounded so an integer number of elements covers each
    extent exactly; the realized spacing never exceeds ``h`` by more than
    roundoff.

    Parameters
    ----------
    domain : RectDomain
        Rectangle to mesh.
    h : float
        Target element size in both directions.
    order : int
        Nodal order of the mesh.

    Returns
    -------
    StructuredMesh
    """
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    nx = max(1, math.ceil(domain.width / h - 1e-9))
    ny = max(1, math.ceil(domain.height / h - 1e-9))
    xs = np.linspace(domain.x0, domain.x1, nx + 1)
    ys = np.linspace(domain.y0, domain.y1, ny + 1)
    return StructuredMesh(xs, ys, order=order)


def build_tensor_mesh(x_lines, y_lines, order: int = 1) -> StructuredMesh:
    """Mesh from explicit line arrays (graded meshes)."""
    return StructuredMesh(np.asarray(x_lines, float), np.asarray(y_lines, float), order=order)


def build_perforated_mesh(
    domain: RectDomain,
    lattice: ObstacleLattice,
    n_per_cell: int,
    order: int = 2,
    y_lines=None,
) -> StructuredMesh:
    """Mesh of a rectangle minus a periodic array of square obstacles.

    The horizontal lines are uniform with spacing ``period / n_per_cell``
    so obstacle edges land exactly on mesh lines.  Vertical lines default
    to the same uniform spacing; a custom array (graded away from the
    obstacle band) may be supplied as long as it contains every obstacle
    edge line inside the band.

    Parameters
    ----------
    domain : RectDomain
        Full domain, horizontally congruent with the lattice band.
    lattice : ObstacleLattice
        Obstacle description; its band must sit inside the domain.
    n_per_cell : int
        Elements per cell edge; must align the obstacle (see
        :meth:`ObstacleLattice.edge_offsets`).
    order : int
        Nodal order.
    y_lines : ndarray, optional
        Explicit vertical element lines covering the domain height.

    Returns
    -------
    StructuredMesh
        Mesh with obstacle-covered elements deactivated.
    """
    band = lattice.band
    if not (
        abs(band.x0 - domain.x0) < 1e-12 and abs(band.x1 - domain.x1) < 1e-12
    ):
        raise ValueError("lattice band must span the full domain width")
    if band.y0 < domain.y0 - 1e-12 or band.y1 > domain.y1 + 1e-12:
        raise ValueError("lattice band must sit inside the domain")
    lo, hi = lattice.edge_offsets(n_per_cell)
    h = lattice.period / n_per_cell
    nx = lattice.cells_x * n_per_cell
    xs = domain.x0 + h * np.arange(nx + 1)
    xs[-1] = domain.x1
    if y_lines is None:
        n_below = _exact_multiple(band.y0 - domain.y0, h, "gap below the band")
        n_above = _exact_multiple(domain.y1 - band.y1, h, "gap above the band")
        ny = n_below + lattice.cells_y * n_per_cell + n_above
        ys = domain.y0 + h * np.arange(ny + 1)
        ys[-1] = domain.y1
    else:
        ys = np.asarray(y_lines, dtype=float)
        if abs(ys[0] - domain.y0) > 1e-12 or abs(ys[-1] - domain.y1) > 1e-12:
            raise ValueError("y_lines must span the domain height")
        required = band.y0 + h * np.arange(lattice.cells_y * n_per_cell + 1)
        for line in required:
            if np.min(np.abs(ys - line)) > 1e-9 * max(1.0, abs(line)):
                raise ValueError(
                    f"y_lines must contain the band line y={line} so obstacle "
                    "edges stay grid-aligned"
                )
    mesh = StructuredMesh(xs, ys, order=order)
    if lattice.s_hat > 0.0:
        active = _obstacle_activity(mesh, lattice, n_per_cell, lo, hi)
        mesh = StructuredMesh(xs, ys, order=order, active=active)
    return mesh


def _exact_multiple(extent: float, h: float, what: str) -> int:
    n = extent / h
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ValueError(f"{what} ({extent}) is not a multiple of the spacing {h}")
    return round(n)


def _obstacle_activity(
    mesh: StructuredMesh,
    lattice: ObstacleLattice,
    n_per_cell: int,
    lo: int,
    hi: int,
) -> np.ndarray:
    """Activity mask: element centers inside an obstacle become inactive."""
    ex, ey = mesh._element_grid_indices()
    cx = 0.5 * (mesh.xs[ex] + mesh.xs[ex + 1])
    cy = 0.5 * (mesh.ys[ey] + mesh.ys[ey + 1])
    band = lattice.band
    inside_band = (cy > band.y0) & (cy < band.y1)
    # Sub-cell position in grid units; obstacle occupies [lo, hi) in both.
    fx = (cx - band.x0) / lattice.period
    fy = (cy - band.y0) / lattice.period
    ux = (fx - np.floor(fx)) * n_per_cell
    uy = (fy - np.floor(fy)) * n_per_cell
    inside_obstacle = (ux > lo) & (ux < hi) & (uy > lo) & (uy < hi)
    return ~(inside_band & inside_obstacle)


def extract_interface_nodes(mesh: StructuredMesh, y: float) -> np.ndarray:
    """Active nodes on the horizontal mesh line nearest to ``y``.

    Parameters
    ----------
    mesh : StructuredMesh
        Mesh to query.
    y : float
        Interface height; must coincide with a node line within half the
        local spacing.

    Returns
    -------
    ndarray of int
        Node ids sorted by increasing x.
    """
    j = mesh.line_index(y)
    ids = j * mesh.nnx + np.arange(mesh.nnx)
    return ids[mesh.node_active[ids]]


# ----------------------------------------------------------------------
# Graded line generators
# ----------------------------------------------------------------------


def graded_lines(
    start: float,
    stop: float,
    h_first: float,
    h_max: float,
    growth: float = 1.35,
) -> np.ndarray:
    """Monotone line array from ``start`` to ``stop`` with geometric grading.

    Spacing begins at ``h_first`` next to ``start``, grows by ``growth``
    per step up to ``h_max``, then stays uniform.  The uniform tail is
    rescaled so the final line lands exactly on ``stop``.

    Parameters
    ----------
    start, stop : float
        Interval endpoints; ``start < stop``.
    h_first : float
        First spacing at the ``start`` end.
    h_max : float
        Spacing cap for the far end.
    growth : float
        Geometric growth factor (> 1).

    Returns
    -------
    ndarray
        Line coordinates including both endpoints.
    """
    if stop <= start:
        raise ValueError("need start < stop")
    if h_first <= 0 or h_max < h_first or growth <= 1.0:
        raise ValueError("need 0 < h_first <= h_max and growth > 1")
    length = stop - start
    if h_first >= length:
        return np.array([start, stop])
    steps = []
    h = h_first
    total = 0.0
    while h < h_max and total + h < length:
        steps.append(h)
        total += h
        h = min(h * growth, h_max)
    remaining = length - total
    n_uni = max(1, math.ceil(remaining / h_max - 1e-9))
    steps.extend([remaining / n_uni] * n_uni)
    lines = start + np.concatenate([[0.0], np.cumsum(steps)])
    lines[-1] = stop
    return lines


def overlap_line_set(
    y_bottom: float,
    y_top: float,
    delta: float,
    h_fine: float,
    h_max: float,
    growth: float = 1.35,
) -> np.ndarray:
    """Vertical lines for an overlapping two-subdomain split of a channel.

    Builds one array over ``[y_bottom, y_top]`` that contains exactly the
    lines ``y_bottom``, ``-delta``, ``0`` and ``y_top``.  The overlap
    ``(-delta, 0)`` is meshed uniformly with spacing at most ``h_fine``
    (at least one element), and the mesh grades geometrically away from
    the overlap on both sides.  Slicing this array at ``-delta`` and at
    ``0`` yields boundary-conforming, overlap-conforming meshes for the
    two subdomains.

    Parameters
    ----------
    y_bottom, y_top : float
        Channel extent with ``y_bottom < -delta < 0 < y_top``.
    delta : float
        Overlap thickness.
    h_fine : float
        Target spacing inside and next to the overlap.
    h_max : float
        Coarse spacing far from the overlap.
    growth : float
        Geometric growth factor.

    Returns
    -------
    ndarray
        Strictly increasing line coordinates.
    """
    if not (y_bottom < -delta < 0.0 < y_top):
        raise ValueError("need y_bottom < -delta < 0 < y_top")
    n_ov = max(1, round(delta / h_fine))
    overlap = -delta + (delta / n_ov) * np.arange(n_ov + 1)
    overlap[0], overlap[-1] = -delta, 0.0
    h_start = min(h_fine, delta / n_ov)
    below = graded_lines(delta, -y_bottom, h_start, h_max, growth)
    below = -below[::-1]
    below[0], below[-1] = y_bottom, -delta
    above = graded_lines(0.0, y_top, h_start, h_max, growth)
    return np.concatenate([below[:-1], overlap, above[1:]])
