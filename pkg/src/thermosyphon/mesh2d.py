"""Rectangular cell-centred grids on (0, W) x (0, H).

Elements are numbered ``k = i + nx * j`` (``i`` along x, ``j`` along y).
Edges are numbered with all x-normal edges first (row by row, left to right),
then all y-normal edges (row by row, bottom to top).  For an interior edge the
``plus`` owner is the element on the low side and ``normal`` points from
``plus`` to ``minus``; for a boundary edge ``minus`` is ``-1`` and ``normal`` is
the outward unit normal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

LEFT, RIGHT, BOTTOM, TOP = 0, 1, 2, 3
SIDE_NAMES = ("left", "right", "bottom", "top")
INTERIOR = -1


@dataclass(frozen=True)
class StructuredGrid2D:
    nx: int
    ny: int
    W: float
    H: float
    xn: np.ndarray  # node coordinates along x, length nx + 1
    yn: np.ndarray
    centers: np.ndarray  # (nel, 2)
    areas: np.ndarray
    edge_plus: np.ndarray
    edge_minus: np.ndarray
    edge_normal: np.ndarray  # (ned, 2)
    edge_length: np.ndarray
    edge_d: np.ndarray
    edge_mid: np.ndarray  # (ned, 2)
    edge_side: np.ndarray  # INTERIOR or LEFT/RIGHT/BOTTOM/TOP
    element_edges: np.ndarray  # (nel, 4): left, right, bottom, top

    @property
    def nel(self) -> int:
        return self.nx * self.ny

    @property
    def ned(self) -> int:
        return len(self.edge_length)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_side == INTERIOR)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_side != INTERIOR)

    def side_edges(self, side: int) -> np.ndarray:
        return np.flatnonzero(self.edge_side == side)

    def element(self, i: int, j: int) -> int:
        return i + self.nx * j

    def locate(self, x: float, y: float) -> int:
        """Index of the element containing ``(x, y)``; points on shared edges go to the upper cell."""
        if not (0.0 <= x <= self.W and 0.0 <= y <= self.H):
            raise ValueError(f"point ({x}, {y}) lies outside the domain")
        i = min(int(np.searchsorted(self.xn, x, side="right")) - 1, self.nx - 1)
        j = min(int(np.searchsorted(self.yn, y, side="right")) - 1, self.ny - 1)
        return self.element(i, j)

    def outward_normal(self, k: int, e: int) -> np.ndarray:
        return self.edge_normal[e] if self.edge_plus[e] == k else -self.edge_normal[e]

    def neighbour(self, k: int, e: int) -> int:
        """Element across edge ``e`` from ``k`` (``-1`` on the boundary)."""
        if self.edge_plus[e] == k:
            return int(self.edge_minus[e])
        if self.edge_minus[e] == k:
            return int(self.edge_plus[e])
        raise ValueError(f"edge {e} is not an edge of element {k}")

    def as_image(self, field: np.ndarray) -> np.ndarray:
        """Reshape a cell field to ``(ny, nx)`` so that ``out[j, i]`` is element ``(i, j)``."""
        return np.asarray(field).reshape(self.ny, self.nx)


def build_grid(nx: int, ny: int, W: float, H: float,
               xn: np.ndarray | None = None, yn: np.ndarray | None = None) -> StructuredGrid2D:
    """Build a tensor-product rectangular grid.

    ``xn``/``yn`` optionally give strictly increasing node coordinates per axis
    (spanning ``[0, W]`` and ``[0, H]``); otherwise spacing is uniform.
    """
    if int(nx) < 1 or int(ny) < 1:
        raise ConfigError(f"grid needs at least one cell per axis, got nx={nx}, ny={ny}")
    if not (W > 0 and H > 0):
        raise ConfigError(f"domain extents must be positive, got W={W}, H={H}")
    nx, ny = int(nx), int(ny)
    xn = np.linspace(0.0, W, nx + 1) if xn is None else np.asarray(xn, dtype=float)
    yn = np.linspace(0.0, H, ny + 1) if yn is None else np.asarray(yn, dtype=float)
    for name, nodes, n, ext in (("x", xn, nx, W), ("y", yn, ny, H)):
        if len(nodes) != n + 1 or np.any(np.diff(nodes) <= 0):
            raise ConfigError(f"{name} nodes must be {n + 1} strictly increasing values")
        if not (np.isclose(nodes[0], 0.0) and np.isclose(nodes[-1], ext)):
            raise ConfigError(f"{name} nodes must span [0, {ext}]")

    dx, dy = np.diff(xn), np.diff(yn)
    xc, yc = 0.5 * (xn[:-1] + xn[1:]), 0.5 * (yn[:-1] + yn[1:])
    XC, YC = np.meshgrid(xc, yc)
    centers = np.column_stack([XC.ravel(), YC.ravel()])
    areas = np.outer(dy, dx).ravel()

    plus, minus, normal, length, dist, mid, side = [], [], [], [], [], [], []
    element_edges = np.empty((nx * ny, 4), dtype=np.int64)

    # x-normal edges
    for j in range(ny):
        for i in range(nx + 1):
            e = len(plus)
            if i == 0:
                k = j * nx
                plus.append(k); minus.append(-1); normal.append((-1.0, 0.0))
                dist.append(xc[0] - xn[0]); side.append(LEFT)
                element_edges[k, 0] = e
            elif i == nx:
                k = nx - 1 + j * nx
                plus.append(k); minus.append(-1); normal.append((1.0, 0.0))
                dist.append(xn[-1] - xc[-1]); side.append(RIGHT)
                element_edges[k, 1] = e
            else:
                kl, kr = i - 1 + j * nx, i + j * nx
                plus.append(kl); minus.append(kr); normal.append((1.0, 0.0))
                dist.append(xc[i] - xc[i - 1]); side.append(INTERIOR)
                element_edges[kl, 1] = e
                element_edges[kr, 0] = e
            length.append(dy[j])
            mid.append((xn[i], yc[j]))

    # y-normal edges
    for j in range(ny + 1):
        for i in range(nx):
            e = len(plus)
            if j == 0:
                k = i
                plus.append(k); minus.append(-1); normal.append((0.0, -1.0))
                dist.append(yc[0] - yn[0]); side.append(BOTTOM)
                element_edges[k, 2] = e
            elif j == ny:
                k = i + (ny - 1) * nx
                plus.append(k); minus.append(-1); normal.append((0.0, 1.0))
                dist.append(yn[-1] - yc[-1]); side.append(TOP)
                element_edges[k, 3] = e
            else:
                kb, kt = i + (j - 1) * nx, i + j * nx
                plus.append(kb); minus.append(kt); normal.append((0.0, 1.0))
                dist.append(yc[j] - yc[j - 1]); side.append(INTERIOR)
                element_edges[kb, 3] = e
                element_edges[kt, 2] = e
            length.append(dx[i])
            mid.append((xc[i], yn[j]))

    return StructuredGrid2D(
        nx=nx, ny=ny, W=float(W), H=float(H), xn=xn, yn=yn,
        centers=centers, areas=areas,
        edge_plus=np.asarray(plus, dtype=np.int64),
        edge_minus=np.asarray(minus, dtype=np.int64),
        edge_normal=np.asarray(normal, dtype=float),
        edge_length=np.asarray(length, dtype=float),
        edge_d=np.asarray(dist, dtype=float),
        edge_mid=np.asarray(mid, dtype=float),
        edge_side=np.asarray(side, dtype=np.int64),
        element_edges=element_edges,
    )


def jump_and_average(field: np.ndarray, grid: StructuredGrid2D, edge: int) -> tuple[np.ndarray, float]:
    """Jump ``w+ n+ + w- n-`` and average ``(w+ + w-)/2`` of a cell field across ``edge``.

    On boundary edges the outer value is taken as zero.
    """
    wp = float(field[grid.edge_plus[edge]])
    km = grid.edge_minus[edge]
    wm = float(field[km]) if km >= 0 else 0.0
    n = grid.edge_normal[edge]
    return (wp - wm) * n, 0.5 * (wp + wm)
