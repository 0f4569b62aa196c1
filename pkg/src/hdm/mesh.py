"""Structured triangle/rectangle meshes of the unit square and the L-shaped domain.

Cells are stored counter-clockwise. Local edge ``i`` of a triangle is the edge
opposite local vertex ``i``; local edge ``i`` of a rectangle joins local
vertices ``i`` and ``i+1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

GEOM_TOL = 1e-12

DOMAINS = ("square", "lshape")
KINDS = ("triangle", "rectangle")
PATTERNS = ("diagonal", "crisscross")


class Vertex(NamedTuple):
    id: int
    x: float
    y: float


class Cell(NamedTuple):
    id: int
    kind: str
    vertex_ids: tuple
    diameter: float


class Edge(NamedTuple):
    id: int
    vertex_ids: tuple
    cell_ids: tuple
    midpoint: tuple
    unit_normal: tuple
    is_boundary: bool


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(eq=False)
class Mesh:
    """Immutable mesh with derived connectivity.

    Only ``points``, ``cells``, ``kind``, ``domain`` and ``level`` are inputs;
    edges, adjacency, normals and boundary flags are built in ``__post_init__``.
    """

    points: np.ndarray
    cells: np.ndarray
    kind: str
    domain: str
    level: int = 0

    edges: np.ndarray = field(init=False, repr=False)
    edge_cells: np.ndarray = field(init=False, repr=False)
    cell_edges: np.ndarray = field(init=False, repr=False)
    edge_normals: np.ndarray = field(init=False, repr=False)
    edge_midpoints: np.ndarray = field(init=False, repr=False)
    edge_lengths: np.ndarray = field(init=False, repr=False)
    boundary_vertices: np.ndarray = field(init=False, repr=False)
    boundary_edges: np.ndarray = field(init=False, repr=False)
    areas: np.ndarray = field(init=False, repr=False)
    diameters: np.ndarray = field(init=False, repr=False)
    centroids: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float)
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        if self.kind not in KINDS:
            raise ValueError(f"unknown cell kind {self.kind!r}")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        nvc = 3 if self.kind == "triangle" else 4
        if self.cells.shape[1] != nvc:
            raise ValueError(f"{self.kind} cells need {nvc} vertices")
        self._build_geometry()
        self._build_edges()
        classify_boundary(self)
        _freeze(self.points, self.cells, self.edges, self.edge_cells, self.cell_edges,
                self.edge_normals, self.edge_midpoints, self.edge_lengths,
                self.boundary_vertices, self.boundary_edges, self.areas,
                self.diameters, self.centroids)

    # -- construction helpers -------------------------------------------------
    def _build_geometry(self):
        xy = self.points[self.cells]  # (nC, nv, 2)
        x, y = xy[..., 0], xy[..., 1]
        # shoelace formula, positive for counter-clockwise cells
        self.areas = 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
        if np.any(self.areas <= 0):
            raise ValueError("cells must be counter-clockwise with positive area")
        diff = xy[:, :, None, :] - xy[:, None, :, :]
        self.diameters = np.sqrt((diff ** 2).sum(-1)).max(axis=(1, 2))
        self.centroids = xy.mean(axis=1)

    def _local_edges(self):
        if self.kind == "triangle":
            return np.array([[1, 2], [2, 0], [0, 1]])
        return np.array([[0, 1], [1, 2], [2, 3], [3, 0]])

    def _build_edges(self):
        loc = self._local_edges()
        nC, ne = self.cells.shape[0], loc.shape[0]
        pairs = np.sort(self.cells[:, loc].reshape(-1, 2), axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        self.edges = edges
        self.cell_edges = inverse.reshape(nC, ne)

        nE = edges.shape[0]
        edge_cells = -np.ones((nE, 2), dtype=np.int64)
        owner = np.repeat(np.arange(nC), ne)
        # cells are visited in increasing id, so slot 0 holds the lower id
        for e, c in zip(inverse, owner):
            if edge_cells[e, 0] < 0:
                edge_cells[e, 0] = c
            elif edge_cells[e, 1] < 0:
                edge_cells[e, 1] = c
            else:
                raise ValueError(f"edge {e} shared by more than two cells")
        self.edge_cells = edge_cells

        a, b = self.points[edges[:, 0]], self.points[edges[:, 1]]
        t = b - a
        self.edge_lengths = np.sqrt((t ** 2).sum(1))
        self.edge_midpoints = 0.5 * (a + b)
        n = np.stack([t[:, 1], -t[:, 0]], axis=1) / self.edge_lengths[:, None]
        interior = edge_cells[:, 1] >= 0
        # interior: from lower-id cell towards higher-id cell; boundary: outward
        ref = np.where(interior[:, None],
                       self.centroids[edge_cells[:, 1].clip(0)] - self.centroids[edge_cells[:, 0]],
                       self.edge_midpoints - self.centroids[edge_cells[:, 0]])
        sign = np.sign((n * ref).sum(1))
        self.edge_normals = n * sign[:, None]

    # -- queries --------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return self.points.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_vertices)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_edges)

    def vertex(self, i: int) -> Vertex:
        return Vertex(int(i), float(self.points[i, 0]), float(self.points[i, 1]))

    def cell(self, i: int) -> Cell:
        return Cell(int(i), self.kind, tuple(int(v) for v in self.cells[i]), float(self.diameters[i]))

    def edge(self, i: int) -> Edge:
        cells = tuple(int(c) for c in self.edge_cells[i] if c >= 0)
        return Edge(int(i), tuple(int(v) for v in self.edges[i]), cells,
                    tuple(self.edge_midpoints[i]), tuple(self.edge_normals[i]),
                    bool(self.boundary_edges[i]))

    def __repr__(self):
        return (f"Mesh({self.domain}/{self.kind}, level={self.level}, nV={self.n_vertices}, "
                f"nE={self.n_edges}, nC={self.n_cells}, h={self.h:.5f})")


def on_boundary(domain: str, xy: np.ndarray, tol: float = GEOM_TOL) -> np.ndarray:
    """Boolean mask of points lying on the boundary of ``domain``."""
    x, y = np.asarray(xy)[..., 0], np.asarray(xy)[..., 1]
    if domain == "square":
        return ((np.abs(x) < tol) | (np.abs(x - 1) < tol)
                | (np.abs(y) < tol) | (np.abs(y - 1) < tol))
    if domain == "lshape":
        outer = (np.abs(np.abs(x) - 1) < tol) | (np.abs(np.abs(y) - 1) < tol)
        notch_h = (np.abs(y) < tol) & (x > -tol)
        notch_v = (np.abs(x) < tol) & (y < tol)
        return outer | notch_h | notch_v
    raise ValueError(f"unknown domain {domain!r}")


def classify_boundary(m: Mesh) -> Mesh:
    """Fill the vertex and edge boundary flags of ``m`` in place and return it.

    An edge is a boundary edge iff both end points lie on the boundary and it
    has a single adjacent cell.
    """
    bv = on_boundary(m.domain, m.points)
    m.boundary_vertices = bv
    m.boundary_edges = bv[m.edges].all(axis=1) & (m.edge_cells[:, 1] < 0)
    return m


def build_initial_mesh(domain: str, kind: str, pattern: str = "diagonal") -> Mesh:
    """Level-0 mesh.

    ``square``: two triangles split along (0,0)-(1,1), or one rectangle. With
    ``pattern="crisscross"`` the square is split into four triangles meeting
    at its centre (h = 1 at level 0).
    ``lshape``: three unit squares, each split along the diagonal through the
    re-entrant corner (0,0) for triangles.
    """
    if pattern not in PATTERNS:
        raise ValueError(f"unknown triangulation pattern {pattern!r}")
    if pattern == "crisscross" and (domain, kind) != ("square", "triangle"):
        raise ValueError("crisscross pattern is only defined for square/triangle")
    if domain == "square":
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        if kind == "triangle" and pattern == "crisscross":
            pts = np.vstack([pts, [[0.5, 0.5]]])
            cells = [[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]]
        elif kind == "triangle":
            cells = [[0, 1, 2], [0, 2, 3]]
        else:
            cells = [[0, 1, 2, 3]]
    elif domain == "lshape":
        pts = np.array([[-1.0, -1.0], [0.0, -1.0], [-1.0, 0.0], [0.0, 0.0],
                        [1.0, 0.0], [-1.0, 1.0], [0.0, 1.0], [1.0, 1.0]])
        if kind == "triangle":
            cells = [[0, 1, 3], [0, 3, 2],   # (-1,0)x(-1,0), diagonal (0,0)-(-1,-1)
                     [2, 3, 5], [3, 6, 5],   # (-1,0)x(0,1),  diagonal (0,0)-(-1,1)
                     [3, 4, 7], [3, 7, 6]]   # (0,1)x(0,1),   diagonal (0,0)-(1,1)
        else:
            cells = [[0, 1, 3, 2], [2, 3, 6, 5], [3, 4, 7, 6]]
    else:
        raise ValueError(f"unknown domain {domain!r}")
    if kind not in KINDS:
        raise ValueError(f"unknown cell kind {kind!r}")
    return Mesh(pts, np.array(cells), kind, domain, 0)


def refine_red(m: Mesh) -> Mesh:
    """Uniform red refinement: every cell is split into four congruent children."""
    nV, nE = m.n_vertices, m.n_edges
    mid = nV + np.arange(nE)
    pts = [m.points, m.edge_midpoints]
    ce = mid[m.cell_edges]
    v = m.cells
    if m.kind == "triangle":
        m0, m1, m2 = ce[:, 0], ce[:, 1], ce[:, 2]  # opposite v0, v1, v2
        children = np.stack([
            np.stack([v[:, 0], m2, m1], 1),
            np.stack([m2, v[:, 1], m0], 1),
            np.stack([m1, m0, v[:, 2]], 1),
            np.stack([m0, m1, m2], 1),
        ], axis=1).reshape(-1, 3)
    else:
        c = nV + nE + np.arange(m.n_cells)
        pts.append(m.centroids)
        e0, e1, e2, e3 = ce[:, 0], ce[:, 1], ce[:, 2], ce[:, 3]
        children = np.stack([
            np.stack([v[:, 0], e0, c, e3], 1),
            np.stack([e0, v[:, 1], e1, c], 1),
            np.stack([c, e1, v[:, 2], e2], 1),
            np.stack([e3, c, e2, v[:, 3]], 1),
        ], axis=1).reshape(-1, 4)
    return Mesh(np.vstack(pts), children, m.kind, m.domain, m.level + 1)


def build_mesh(domain: str, kind: str, level: int, pattern: str = "diagonal") -> Mesh:
    if level < 0:
        raise ValueError("level must be non-negative")
    m = build_initial_mesh(domain, kind, pattern)
    for _ in range(level):
        m = refine_red(m)
    return m


def dump_mesh(m: Mesh) -> str:
    """Plain-text dump: ``nV nE nC`` header, vertex lines, cell lines."""
    lines = [f"{m.n_vertices} {m.n_edges} {m.n_cells}"]
    lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(m.points.tolist())]
    lines += [f"{i} {m.kind} " + " ".join(str(v) for v in c) for i, c in enumerate(m.cells.tolist())]
    return "\n".join(lines) + "\n"


def load_mesh(text: str, domain: str, level: int = 0) -> Mesh:
    lines = text.strip().splitlines()
    nV, _, nC = (int(t) for t in lines[0].split())
    pts = np.array([[float(t) for t in ln.split()[1:3]] for ln in lines[1:1 + nV]])
    rows = [ln.split() for ln in lines[1 + nV:1 + nV + nC]]
    kind = rows[0][1] if rows else "triangle"
    cells = np.array([[int(t) for t in r[2:]] for r in rows])
    return Mesh(pts, cells, kind, domain, level)
