"""Polygonal meshes and per-element geometry.

Cells are stored as counter-clockwise vertex lists. Edges are identified by
the unordered pair of their vertex indices, so two cells are neighbours
exactly when they list the same pair. A node lying on the side of a coarser
neighbour is simply an extra vertex of that neighbour's polygon.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np


class MeshError(ValueError):
    """Invalid mesh topology or geometry."""


class InvalidCellError(MeshError):
    """A polygon is degenerate, repeated or self-intersecting."""


class MeshFormatError(MeshError):
    """A mesh file cannot be parsed."""


def signed_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    # proper or touching intersection of closed segments
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 * d2 < 0 and d3 * d4 < 0:
        return True

    def on_segment(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    if d1 == 0 and on_segment(q1, q2, p1):
        return True
    if d2 == 0 and on_segment(q1, q2, p2):
        return True
    if d3 == 0 and on_segment(p1, p2, q1):
        return True
    if d4 == 0 and on_segment(p1, p2, q2):
        return True
    return False


def is_simple(points: np.ndarray) -> bool:
    """True if the closed polygon has no self-intersections."""
    m = len(points)
    for i in range(m):
        a, b = points[i], points[(i + 1) % m]
        for j in range(i + 1, m):
            if j == i or (j + 1) % m == i or j == (i + 1) % m:
                continue
            if _segments_cross(a, b, points[j], points[(j + 1) % m]):
                return False
    return True


@dataclass(frozen=True)
class ElementGeometry:
    """Geometric data of one polygon.

    ``normals[e]`` is the outward unit normal of the edge running from
    vertex ``e`` to vertex ``e + 1`` (indices modulo ``m``).
    """

    vertices: np.ndarray
    area: float
    centroid: np.ndarray
    diameter: float
    edge_lengths: np.ndarray
    normals: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.vertices)

    @property
    def tangents(self) -> np.ndarray:
        return np.column_stack([-self.normals[:, 1], self.normals[:, 0]])

    def scaled(self, points) -> np.ndarray:
        return scaled_coords(self, points)

    def unscaled(self, xi_eta) -> np.ndarray:
        return np.asarray(xi_eta, dtype=float) * self.diameter + self.centroid


def build_geometry(vertices) -> ElementGeometry:
    """Area, centroid, diameter and edge normals of a CCW simple polygon.

    Raises
    ------
    InvalidCellError
        If the polygon has fewer than three vertices, repeated vertices or a
        non-positive signed area.
    """
    pts = np.asarray(vertices, dtype=float)
    m = len(pts)
    if m < 3:
        raise InvalidCellError(f"polygon needs at least 3 vertices, got {m}")
    nxt = np.roll(pts, -1, axis=0)
    edges = nxt - pts
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    if np.any(lengths == 0.0):
        raise InvalidCellError("polygon has repeated consecutive vertices")
    # shoelace relative to vertex 0 to avoid cancellation far from the origin
    rel = pts - pts[0]
    rnxt = nxt - pts[0]
    cross = rel[:, 0] * rnxt[:, 1] - rnxt[:, 0] * rel[:, 1]
    area = 0.5 * cross.sum()
    if not area > 0.0:
        raise InvalidCellError(f"polygon has non-positive signed area {area:g}")
    # area-weighted centroid, exact for concave polygons
    cx = ((rel[:, 0] + rnxt[:, 0]) * cross).sum() / (6.0 * area) + pts[0, 0]
    cy = ((rel[:, 1] + rnxt[:, 1]) * cross).sum() / (6.0 * area) + pts[0, 1]
    diff = pts[:, None, :] - pts[None, :, :]
    diameter = float(np.sqrt((diff ** 2).sum(axis=-1).max()))
    normals = np.column_stack([edges[:, 1], -edges[:, 0]]) / lengths[:, None]
    return ElementGeometry(pts, float(area), np.array([cx, cy]), diameter,
                           lengths, normals)


def scaled_coords(geom: ElementGeometry, points) -> np.ndarray:
    """Map physical points to centroid-centred coordinates scaled by h_E."""
    return (np.asarray(points, dtype=float) - geom.centroid) / geom.diameter


class Mesh:
    """Vertices plus counter-clockwise polygonal cells.

    Clockwise cells are reversed on construction. The edge table is derived:
    ``edges[i]`` holds the sorted vertex pair of edge ``i``, ``edge_cells[i]``
    the one or two adjacent cells, and ``cell_edges[c][e]`` the edge id of
    local edge ``e`` (vertex ``e`` to ``e + 1``) of cell ``c``.
    """

    def __init__(self, vertices, cells: Sequence[Sequence[int]], check_simple: bool = True):
        verts = np.array(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise MeshError("vertices must be an (n, 2) array")
        if not np.all(np.isfinite(verts)):
            raise MeshError("vertex coordinates must be finite")
        verts.setflags(write=False)
        self.vertices = verts
        nv = len(verts)
        cleaned = []
        for c, cell in enumerate(cells):
            ids = [int(i) for i in cell]
            if len(ids) < 3:
                raise InvalidCellError(f"cell {c}: needs at least 3 vertices")
            if len(set(ids)) != len(ids):
                raise InvalidCellError(f"cell {c}: repeated vertex index")
            bad = [i for i in ids if i < 0 or i >= nv]
            if bad:
                raise MeshError(f"cell {c}: vertex index {bad[0]} out of range (n_vertices={nv})")
            pts = verts[ids]
            a = signed_area(pts)
            if a == 0.0:
                raise InvalidCellError(f"cell {c}: zero area")
            if a < 0.0:
                ids = ids[::-1]
                pts = pts[::-1]
            if check_simple and not is_simple(pts):
                raise InvalidCellError(f"cell {c}: polygon is self-intersecting")
            cleaned.append(tuple(ids))
        self.cells = tuple(cleaned)
        self._build_edges()

    def _build_edges(self):
        index = {}
        edges = []
        edge_cells = []
        cell_edges = []
        for c, ids in enumerate(self.cells):
            local = []
            m = len(ids)
            for e in range(m):
                a, b = ids[e], ids[(e + 1) % m]
                key = (a, b) if a < b else (b, a)
                eid = index.get(key)
                if eid is None:
                    eid = len(edges)
                    index[key] = eid
                    edges.append(key)
                    edge_cells.append([c])
                else:
                    if len(edge_cells[eid]) >= 2:
                        raise MeshError(f"edge {key} shared by more than two cells")
                    if edge_cells[eid][0] == c:
                        raise MeshError(f"cell {c} uses edge {key} twice")
                    edge_cells[eid].append(c)
                local.append(eid)
            cell_edges.append(tuple(local))
        self.edges = np.array(edges, dtype=int).reshape(-1, 2)
        self.edge_cells = tuple(tuple(ec) for ec in edge_cells)
        self.cell_edges = tuple(cell_edges)
        self._edge_index = index

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_id(self, a: int, b: int) -> int:
        return self._edge_index[(a, b) if a < b else (b, a)]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.array([i for i, ec in enumerate(self.edge_cells) if len(ec) == 1], dtype=int)

    @cached_property
    def oriented_boundary_edges(self) -> np.ndarray:
        """Boundary edges as (start, end) vertex pairs traversed with the domain on the left."""
        out = []
        for eid in self.boundary_edges:
            c = self.edge_cells[eid][0]
            ids = self.cells[c]
            e = self.cell_edges[c].index(eid)
            out.append((ids[e], ids[(e + 1) % len(ids)]))
        return np.array(out, dtype=int).reshape(-1, 2)

    @cached_property
    def used_vertices(self) -> np.ndarray:
        used = np.zeros(self.n_vertices, dtype=bool)
        for ids in self.cells:
            used[list(ids)] = True
        return np.flatnonzero(used)

    def cell_vertices(self, c: int) -> np.ndarray:
        return self.vertices[list(self.cells[c])]

    def geometry(self, c: int) -> ElementGeometry:
        return build_geometry(self.cell_vertices(c))

    @cached_property
    def geometries(self) -> tuple:
        return tuple(self.geometry(c) for c in range(self.n_cells))

    @cached_property
    def h_max(self) -> float:
        return max(g.diameter for g in self.geometries)

    @cached_property
    def total_area(self) -> float:
        return float(sum(g.area for g in self.geometries))

    def boundary_loops(self) -> list:
        """Closed loops of boundary vertices (domain on the left)."""
        succ = {}
        for a, b in self.oriented_boundary_edges:
            if a in succ:
                raise MeshError(f"boundary vertex {a} is non-manifold")
            succ[int(a)] = int(b)
        loops = []
        while succ:
            start = next(iter(succ))
            loop = [start]
            cur = succ.pop(start)
            while cur != start:
                if cur not in succ:
                    raise MeshError("open boundary chain")
                loop.append(cur)
                cur = succ.pop(cur)
            loops.append(loop)
        return loops

    def to_dict(self) -> dict:
        return {"vertices": self.vertices.tolist(),
                "cells": [list(c) for c in self.cells]}

    def __repr__(self):
        return f"Mesh(n_vertices={self.n_vertices}, n_cells={self.n_cells}, n_edges={self.n_edges})"


def save_mesh(mesh: Mesh, path) -> None:
    """Write ``{"vertices": [[x, y], ...], "cells": [[i0, i1, ...], ...]}``.

    Floats go through ``repr`` so a reload reproduces coordinates bit-exactly.
    """
    verts = ",\n    ".join("[%r, %r]" % (float(x), float(y)) for x, y in mesh.vertices)
    cells = ",\n    ".join("[" + ", ".join(str(i) for i in c) + "]" for c in mesh.cells)
    text = '{\n  "vertices": [\n    %s\n  ],\n  "cells": [\n    %s\n  ]\n}\n' % (verts, cells)
    Path(path).write_text(text, encoding="utf-8")


def load_mesh(path) -> Mesh:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MeshFormatError(f"mesh file {path} does not exist") from None
    except OSError as exc:
        raise MeshFormatError(f"cannot read mesh file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MeshFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return mesh_from_dict(data, source=str(path))


def mesh_from_dict(data, source: str = "<dict>") -> Mesh:
    if not isinstance(data, dict) or "vertices" not in data or "cells" not in data:
        raise MeshFormatError(f"{source}: expected an object with 'vertices' and 'cells'")
    verts = data["vertices"]
    for i, v in enumerate(verts):
        if not (isinstance(v, (list, tuple)) and len(v) == 2
                and all(isinstance(t, (int, float)) for t in v)):
            raise MeshFormatError(f"{source}: vertex {i} is not an [x, y] pair")
    cells = data["cells"]
    for c, cell in enumerate(cells):
        if not isinstance(cell, (list, tuple)) or not all(isinstance(i, int) for i in cell):
            raise MeshFormatError(f"{source}: cell {c} is not a list of integer indices")
    try:
        return Mesh(np.array(verts, dtype=float).reshape(-1, 2), cells)
    except MeshError as exc:
        raise MeshFormatError(f"{source}: {exc}") from exc
