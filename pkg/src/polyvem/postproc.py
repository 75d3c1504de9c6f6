"""Projected strain and stress, error norms, and file output."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .assembly import Solution, edge_point_nodes
from .mesh import Mesh
from .polybasis import eval_monomials, gauss_legendre, gauss_lobatto, polygon_moments, polygon_quadrature


def strain_coefficients(solution: Solution, cell: int) -> np.ndarray:
    """Coefficients of the projected strain of one cell in the N^P basis (length l)."""
    return solution.elements[cell].Pi @ solution.cell_values(cell)


def strain_at(solution: Solution, cell: int, points) -> np.ndarray:
    """Projected Voigt strain (eps_xx, eps_yy, gamma_xy) at physical points, shape (npts, 3)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    geom = solution.mesh.geometries[cell]
    s = geom.scaled(pts)
    q = eval_monomials(solution.k - 1, s[:, 0], s[:, 1])
    coef = strain_coefficients(solution, cell).reshape(-1, 3)
    return q @ coef


def stress_at(solution: Solution, cell: int, points) -> np.ndarray:
    if solution.material is None:
        raise ValueError("stress recovery needs a constant material")
    return strain_at(solution, cell, points) @ solution.material.C.T


def average_stress(solution: Solution, cell: int) -> np.ndarray:
    geom = solution.mesh.geometries[cell]
    mom = polygon_moments(geom, solution.k - 1)
    q_avg = mom.values[: (solution.k * (solution.k + 1)) // 2] / geom.area
    eps = q_avg @ strain_coefficients(solution, cell).reshape(-1, 3)
    return solution.material.C @ eps


def locate_points(mesh: Mesh, points) -> np.ndarray:
    """Index of a cell containing each point (-1 if outside), by crossing number."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    owner = -np.ones(len(pts), dtype=int)
    x, y = pts[:, 0], pts[:, 1]
    for c in range(mesh.n_cells):
        v = mesh.cell_vertices(c)
        lo, hi = v.min(axis=0), v.max(axis=0)
        cand = np.flatnonzero((owner < 0) & (x >= lo[0]) & (x <= hi[0]) & (y >= lo[1]) & (y <= hi[1]))
        if len(cand) == 0:
            continue
        px, py = x[cand], y[cand]
        inside = np.zeros(len(cand), dtype=bool)
        w = np.roll(v, -1, axis=0)
        for (x0, y0), (x1, y1) in zip(v, w):
            crosses = (y0 > py) != (y1 > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
            inside ^= crosses & (px < xint)
        owner[cand[inside]] = c
    # points exactly on a boundary can be missed by the half-open test
    missing = np.flatnonzero(owner < 0)
    if len(missing):
        centroids = np.array([g.centroid for g in mesh.geometries])
        for i in missing:
            d = np.hypot(*(centroids - pts[i]).T)
            for c in np.argsort(d)[:8]:
                if _on_polygon(mesh.cell_vertices(c), pts[i]):
                    owner[i] = c
                    break
    return owner


def _on_polygon(v, p, tol=1e-12) -> bool:
    w = np.roll(v, -1, axis=0)
    for a, b in zip(v, w):
        ab = b - a
        t = np.dot(p - a, ab) / np.dot(ab, ab)
        if -tol <= t <= 1 + tol:
            if np.hypot(*(a + t * ab - p)) <= tol * max(1.0, np.hypot(*ab)):
                return True
    return False


def sample_stress(solution: Solution, points) -> np.ndarray:
    """Projected stress at arbitrary points of the domain, shape (npts, 3)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    owner = locate_points(solution.mesh, pts)
    if np.any(owner < 0):
        raise ValueError(f"{int(np.sum(owner < 0))} sample points lie outside the mesh")
    out = np.empty((len(pts), 3))
    for c in np.unique(owner):
        sel = owner == c
        out[sel] = stress_at(solution, int(c), pts[sel])
    return out


@dataclass(frozen=True)
class ErrorReport:
    D1: float
    D2: float
    h: float
    n_dofs: int


def error_D1(solution: Solution, exact_strain: Callable[[np.ndarray], np.ndarray],
             extra_degree: int = 2) -> float:
    """Energy-type error: root of the summed squared Voigt-norm strain error.

    Each element is integrated with the triangle-fan rule of degree
    ``2k + extra_degree``.
    """
    k = solution.k
    total = 0.0
    for c, geom in enumerate(solution.mesh.geometries):
        pts, w = polygon_quadrature(geom.vertices, 2 * k + extra_degree)
        s = geom.scaled(pts)
        q = eval_monomials(k - 1, s[:, 0], s[:, 1])
        eps_h = q @ strain_coefficients(solution, c).reshape(-1, 3)
        diff = np.asarray(exact_strain(pts), dtype=float).reshape(len(pts), 3) - eps_h
        total += float(w @ (diff ** 2).sum(axis=1))
    return float(np.sqrt(max(total, 0.0)))


def _lagrange_derivative_matrix(nodes: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Derivatives at t of the Lagrange polynomials through ``nodes``, shape (len(t), len(nodes))."""
    n = len(nodes)
    out = np.zeros((len(t), n))
    for j in range(n):
        others = np.delete(nodes, j)
        denom = np.prod(nodes[j] - others)
        total = np.zeros_like(t)
        for i in range(len(others)):
            rest = np.delete(others, i)
            total += np.prod(t[:, None] - rest[None, :], axis=1) if len(rest) else 1.0
        out[:, j] = total / denom
    return out


def error_D2(solution: Solution, exact_displacement: Callable[[np.ndarray], np.ndarray],
             exact_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
             n_gauss: int = 8) -> float:
    """Skeleton error: root of sum over edges of h_f * int_f |d(u_ex - u_h)/dt|^2.

    ``exact_gradient(points)`` returns (npts, 2, 2) with ``[i, j] = d u_i / d x_j``;
    without it the tangential derivative is taken by central differences.
    """
    mesh = solution.mesh
    k = solution.k
    gl_nodes = gauss_lobatto(k + 1).nodes
    tg, wg = gauss_legendre(n_gauss)
    dL = _lagrange_derivative_matrix(gl_nodes, tg)   # d/dt on [-1, 1]
    total = 0.0
    for eid, (a, b) in enumerate(mesh.edges):
        p0, p1 = mesh.vertices[a], mesh.vertices[b]
        vec = p1 - p0
        L = float(np.hypot(*vec))
        tang = vec / L
        nodes = edge_point_nodes(mesh, solution.dofmap, int(a), int(b))
        uh = np.column_stack([solution.u[2 * nodes], solution.u[2 * nodes + 1]])
        duh = dL @ uh * (2.0 / L)
        pts = p0 + 0.5 * (tg + 1.0)[:, None] * vec
        if exact_gradient is not None:
            grad = np.asarray(exact_gradient(pts), dtype=float).reshape(len(pts), 2, 2)
            dex = grad @ tang
        else:
            step = 1e-6 * L
            dex = (np.asarray(exact_displacement(pts + step * tang))
                   - np.asarray(exact_displacement(pts - step * tang))) / (2 * step)
        diff = dex - duh
        total += L * (0.5 * L) * float(wg @ (diff ** 2).sum(axis=1))
    return float(np.sqrt(max(total, 0.0)))


def boundary_trace(solution: Solution, point, tol: float = 1e-9) -> np.ndarray:
    """Displacement at a point on the mesh skeleton, from the explicit edge polynomial."""
    mesh = solution.mesh
    p = np.asarray(point, dtype=float)
    scale = max(1.0, float(np.abs(mesh.vertices).max()))
    gl_nodes = gauss_lobatto(solution.k + 1).nodes
    for a, b in mesh.edges:
        p0, p1 = mesh.vertices[a], mesh.vertices[b]
        vec = p1 - p0
        L2 = float(vec @ vec)
        s = float((p - p0) @ vec) / L2
        if -tol <= s <= 1 + tol and np.hypot(*(p0 + s * vec - p)) <= tol * scale:
            t = 2.0 * s - 1.0
            nodes = edge_point_nodes(mesh, solution.dofmap, int(a), int(b))
            lag = np.array([np.prod([(t - gl_nodes[i]) / (gl_nodes[j] - gl_nodes[i])
                                     for i in range(len(gl_nodes)) if i != j])
                            for j in range(len(gl_nodes))])
            return np.array([lag @ solution.u[2 * nodes], lag @ solution.u[2 * nodes + 1]])
    raise ValueError(f"point {tuple(p)} is not on any mesh edge")


def _fmt(x: float) -> str:
    return repr(float(x))


def export_vtk(mesh: Mesh, solution: Optional[Solution], path, title: str = "polyvem solution") -> None:
    """Legacy ASCII VTK unstructured grid with POLYGON cells (type 7).

    Point data: vertex displacement dofs. Cell data: element-average
    projected stress as three scalars.
    """
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in mesh.vertices]
    size = sum(len(c) + 1 for c in mesh.cells)
    lines.append(f"CELLS {mesh.n_cells} {size}")
    lines += [" ".join([str(len(c))] + [str(i) for i in c]) for c in mesh.cells]
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines += ["7"] * mesh.n_cells
    if solution is not None:
        disp = solution.vertex_displacements()
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        lines.append("VECTORS displacement double")
        lines += [f"{_fmt(u)} {_fmt(v)} 0.0" for u, v in disp]
        if solution.material is not None:
            stress = np.array([average_stress(solution, c) for c in range(mesh.n_cells)])
            lines.append(f"CELL_DATA {mesh.n_cells}")
            for j, name in enumerate(("sigma_xx", "sigma_yy", "sigma_xy")):
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines += [_fmt(v) for v in stress[:, j]]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def export_csv(rows: Sequence[dict], path, columns: Sequence[str]) -> None:
    """Write result rows with a fixed column order; missing values become empty fields."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            out = []
            for col in columns:
                v = row.get(col)
                if v is None:
                    out.append("")
                elif isinstance(v, float):
                    out.append(repr(v))
                else:
                    out.append(str(v))
            writer.writerow(out)


CONVERGENCE_COLUMNS = ("level", "h", "ndofs", "D1", "D2")
COOK_COLUMNS = ("level", "h", "ndofs", "D1", "D2", "vA")
STABSWEEP_COLUMNS = ("alpha0", "tau", "h", "ndofs", "D1")
