"""Global numbering, sparse assembly, boundary conditions and the linear solve."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, splu

from .element import (BodyLoad, ConstitutiveField, ElementError, Material,
                      build_element, element_load, neumann_edge)
from .mesh import Mesh
from .polybasis import gauss_lobatto

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """The constrained system is singular, indefinite or CG did not converge."""


@dataclass(frozen=True)
class GlobalDofMap:
    """Global dof numbering for a mesh and order k.

    Vertex dofs come first (used vertices in index order), then the ``k - 1``
    nodes of every edge ordered from its lower to its higher vertex id, then
    the private moment dofs of each cell. Each node owns the pair (u, v).
    """

    k: int
    n_dofs: int
    vertex_node: np.ndarray      # (n_vertices,) global node id, -1 if unused
    edge_nodes: np.ndarray       # (n_edges, k-1) global node ids, low->high vertex
    moment_nodes: np.ndarray     # (n_cells, r) global node ids
    node_points: np.ndarray      # (n_point_nodes, 2) coordinates of vertex/edge nodes
    cell_dofs: tuple             # per cell: local -> global dof index array

    @property
    def n_nodes(self) -> int:
        return self.n_dofs // 2

    @property
    def n_point_nodes(self) -> int:
        return len(self.node_points)


def number_dofs(mesh: Mesh, k: int) -> GlobalDofMap:
    nv = mesh.n_vertices
    r = k * (k - 1) // 2
    vertex_node = -np.ones(nv, dtype=int)
    used = mesh.used_vertices
    vertex_node[used] = np.arange(len(used))
    nxt = len(used)
    ne = mesh.n_edges
    edge_nodes = (nxt + np.arange(ne * (k - 1))).reshape(ne, k - 1)
    nxt += ne * (k - 1)
    moment_nodes = (nxt + np.arange(mesh.n_cells * r)).reshape(mesh.n_cells, r)
    nxt += mesh.n_cells * r

    s = 0.5 * (gauss_lobatto(k + 1).nodes[1:-1] + 1.0)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    epts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    node_points = np.vstack([mesh.vertices[used], epts.reshape(-1, 2)])

    cell_dofs = []
    for c, ids in enumerate(mesh.cells):
        m = len(ids)
        nodes = [vertex_node[i] for i in ids]
        for e, eid in enumerate(mesh.cell_edges[c]):
            en = edge_nodes[eid]
            # local traversal runs ids[e] -> ids[e+1]; global order runs low -> high
            if ids[e] > ids[(e + 1) % m]:
                en = en[::-1]
            nodes.extend(en)
        nodes.extend(moment_nodes[c])
        nodes = np.asarray(nodes, dtype=int)
        dofs = np.empty(2 * len(nodes), dtype=int)
        dofs[0::2] = 2 * nodes
        dofs[1::2] = 2 * nodes + 1
        cell_dofs.append(dofs)
    return GlobalDofMap(k, 2 * nxt, vertex_node, edge_nodes, moment_nodes, node_points,
                        tuple(cell_dofs))


Region = Callable[[np.ndarray], np.ndarray]
Field = Union[Sequence[float], Callable[[np.ndarray], np.ndarray]]


def _field(value: Field, pts: np.ndarray) -> np.ndarray:
    if callable(value):
        return np.asarray(value(pts), dtype=float).reshape(len(pts), 2)
    return np.broadcast_to(np.asarray(value, dtype=float).reshape(1, 2), (len(pts), 2))


@dataclass
class DirichletBC:
    """Prescribed displacement on the boundary edges selected by ``where``.

    ``where`` maps points (npts, 2) to booleans; an edge is selected when
    both end points and its midpoint satisfy it.
    """

    where: Region
    value: Field = (0.0, 0.0)
    components: tuple = (0, 1)


@dataclass
class PointConstraint:
    """Prescribed displacement at the mesh vertex located at ``point``."""

    point: Sequence[float]
    value: Sequence[float] = (0.0, 0.0)
    components: tuple = (0, 1)
    tol: float = 1e-9


@dataclass
class NeumannBC:
    """Traction on the boundary edges selected by ``where``.

    ``traction`` is a constant 2-vector or ``f(points, normal) -> (npts, 2)``.
    """

    where: Region
    traction: Union[Sequence[float], Callable]


@dataclass
class BoundaryConditions:
    dirichlet: list = field(default_factory=list)
    neumann: list = field(default_factory=list)
    points: list = field(default_factory=list)


def _selected_boundary_edges(mesh: Mesh, where: Region) -> np.ndarray:
    ob = mesh.oriented_boundary_edges
    if len(ob) == 0:
        return ob
    a = mesh.vertices[ob[:, 0]]
    b = mesh.vertices[ob[:, 1]]
    mid = 0.5 * (a + b)
    sel = (np.asarray(where(a), dtype=bool) & np.asarray(where(b), dtype=bool)
           & np.asarray(where(mid), dtype=bool))
    return ob[sel]


@dataclass
class LinearSystem:
    K: sp.csr_matrix
    rhs: np.ndarray
    dofmap: GlobalDofMap
    mesh: Mesh
    elements: list          # per-cell ElementMatrices
    material: Optional[Material] = None
    tau: float = 0.5


def _shape_key(geom, k, tau, C_id):
    rel = (geom.vertices - geom.vertices[0]) / geom.diameter
    return (k, tau, C_id, len(rel), np.round(rel, 12).tobytes(), round(geom.diameter, 14))


def assemble(mesh: Mesh, k: int, material: Union[Material, ConstitutiveField], tau: float = 0.5,
             body_load: BodyLoad = None, bcs: Optional[BoundaryConditions] = None,
             dofmap: Optional[GlobalDofMap] = None, reuse_shapes: bool = True) -> LinearSystem:
    """Global stiffness (CSR) and load vector, Neumann terms included.

    With constant C, elements that are translates of one another share a
    single element computation.
    """
    if dofmap is None:
        dofmap = number_dofs(mesh, k)
    C = material.C if isinstance(material, Material) else material
    cache = {} if (reuse_shapes and not callable(C)) else None
    rows, cols, vals = [], [], []
    rhs = np.zeros(dofmap.n_dofs)
    elements = []
    for c, geom in enumerate(mesh.geometries):
        el = None
        if cache is not None:
            key = _shape_key(geom, k, tau, id(C))
            el = cache.get(key)
        if el is None:
            try:
                el = build_element(geom, k, C, tau, element=c)
            except ElementError:
                raise
            except np.linalg.LinAlgError as exc:
                raise ElementError(str(exc), c) from exc
            if cache is not None:
                cache[key] = el
        elements.append(el)
        dofs = dofmap.cell_dofs[c]
        n = len(dofs)
        rows.append(np.repeat(dofs, n))
        cols.append(np.tile(dofs, n))
        vals.append(el.K.ravel())
        if body_load is not None:
            rhs[dofs] += element_load(k, geom, body_load)
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(dofmap.n_dofs, dofmap.n_dofs)).tocsr()
    K.sum_duplicates()
    if bcs is not None:
        rhs += neumann_load(mesh, dofmap, bcs)
    return LinearSystem(K, rhs, dofmap, mesh, elements,
                        material if isinstance(material, Material) else None, tau)


def edge_point_nodes(mesh: Mesh, dofmap: GlobalDofMap, a: int, b: int) -> np.ndarray:
    """Global node ids along the edge a -> b: vertex a, interior nodes, vertex b."""
    eid = mesh.edge_id(a, b)
    inner = dofmap.edge_nodes[eid]
    if a > b:
        inner = inner[::-1]
    return np.concatenate([[dofmap.vertex_node[a]], inner, [dofmap.vertex_node[b]]]).astype(int)


def neumann_load(mesh: Mesh, dofmap: GlobalDofMap, bcs: BoundaryConditions) -> np.ndarray:
    f = np.zeros(dofmap.n_dofs)
    k = dofmap.k
    for bc in bcs.neumann:
        for a, b in _selected_boundary_edges(mesh, bc.where):
            p0, p1 = mesh.vertices[a], mesh.vertices[b]
            t = p1 - p0
            normal = np.array([t[1], -t[0]]) / np.hypot(*t)
            contrib = neumann_edge(k, p0, p1, bc.traction, normal)
            nodes = edge_point_nodes(mesh, dofmap, a, b)
            np.add.at(f, 2 * nodes, contrib[:, 0])
            np.add.at(f, 2 * nodes + 1, contrib[:, 1])
    return f


def dirichlet_values(mesh: Mesh, dofmap: GlobalDofMap, bcs: BoundaryConditions) -> dict:
    """Map global dof -> prescribed value; later conditions override earlier ones."""
    fixed = {}
    for bc in bcs.dirichlet:
        nodes = set()
        for a, b in _selected_boundary_edges(mesh, bc.where):
            nodes.update(edge_point_nodes(mesh, dofmap, a, b).tolist())
        if not nodes:
            continue
        nodes = np.array(sorted(nodes), dtype=int)
        vals = _field(bc.value, dofmap.node_points[nodes])
        for comp in bc.components:
            for node, v in zip(nodes, vals[:, comp]):
                fixed[2 * int(node) + comp] = float(v)
    for pc in bcs.points:
        pts = mesh.vertices
        d = np.hypot(*(pts - np.asarray(pc.point, dtype=float)).T)
        d[dofmap.vertex_node < 0] = np.inf
        vid = int(np.argmin(d))
        scale = max(1.0, float(np.abs(pts).max()))
        if d[vid] > pc.tol * scale:
            raise ValueError(f"no mesh vertex at constrained point {tuple(pc.point)}")
        node = int(dofmap.vertex_node[vid])
        for comp in pc.components:
            fixed[2 * node + comp] = float(pc.value[comp])
    return fixed


@dataclass
class ConstrainedSystem:
    K: sp.csr_matrix          # free-free block
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n_dofs: int

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        u = np.zeros(self.n_dofs)
        u[self.free] = u_free
        u[self.fixed] = self.fixed_values
        return u


def apply_dirichlet(system: LinearSystem, bcs: Optional[BoundaryConditions]) -> ConstrainedSystem:
    """Symmetric elimination of the prescribed dofs."""
    n = system.dofmap.n_dofs
    fixed_map = dirichlet_values(system.mesh, system.dofmap, bcs) if bcs is not None else {}
    fixed = np.array(sorted(fixed_map), dtype=int)
    values = np.array([fixed_map[i] for i in fixed], dtype=float)
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    K = system.K
    Kff = K[free][:, free].tocsr()
    rhs = system.rhs[free].copy()
    if len(fixed):
        rhs -= K[free][:, fixed] @ values
    return ConstrainedSystem(Kff, rhs, free, fixed, values, n)


@dataclass
class SolveInfo:
    method: str
    residual: float
    iterations: Optional[int] = None
    seconds: float = 0.0


def factorize(A: sp.spmatrix) -> Callable[[np.ndarray], np.ndarray]:
    """Sparse LU of an SPD matrix with symmetric ordering; returns its solve function.

    Raises SolverError when a pivot is non-positive or negligible, which is
    how a missing rigid-motion constraint shows up.
    """
    try:
        lu = splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed ({exc}); "
                          "check that enough Dirichlet conditions remove rigid motions") from exc
    piv = lu.U.diagonal()
    scale = np.abs(A.diagonal()).max()
    bad = np.flatnonzero(piv <= 1e-13 * scale)
    if len(bad):
        raise SolverError(f"system is singular or indefinite: pivot {int(bad[0])} = "
                          f"{piv[bad[0]]:.3e} (matrix scale {scale:.3e}); "
                          "check that enough Dirichlet conditions remove rigid motions")
    return lu.solve


def solve(cs: ConstrainedSystem, method: str = "direct", rtol: float = 1e-10,
          maxiter: Optional[int] = None, system: Optional[LinearSystem] = None,
          refine_steps: int = 0) -> tuple:
    """Solve the constrained system; returns (full dof vector, SolveInfo).

    With ``refine_steps > 0`` (direct method only) the result is corrected
    by iterative refinement against an extended-precision residual of
    ``system``; see :mod:`polyvem.precision`.
    """
    if method not in ("direct", "cg"):
        raise ValueError(f"unknown solver method {method!r}")
    if refine_steps and (method != "direct" or system is None):
        raise ValueError("refinement needs the direct method and the assembled system")
    t0 = time.perf_counter()
    A = cs.K
    b = cs.rhs
    if A.shape[0] == 0:
        return cs.expand(np.zeros(0)), SolveInfo(method, 0.0, 0, 0.0)
    iterations = None
    if method == "direct":
        lu_solve = factorize(A)
        x = lu_solve(b)
    elif method == "cg":
        d = A.diagonal()
        if np.any(d <= 0):
            raise SolverError("non-positive diagonal entry; system is not SPD")
        M = sp.diags(1.0 / d)
        count = [0]

        def cb(_):
            count[0] += 1

        x, status = cg(A, b, rtol=rtol, atol=0.0, M=M, maxiter=maxiter or 20 * A.shape[0],
                       callback=cb)
        iterations = count[0]
        if status != 0:
            raise SolverError(f"conjugate gradient did not converge after {iterations} iterations")
    u = cs.expand(x)
    if refine_steps:
        from .precision import refine
        u = refine(system, cs, u, lu_solve, refine_steps)
        x = u[cs.free]
    bn = np.linalg.norm(b)
    res = float(np.linalg.norm(A @ x - b) / bn) if bn > 0 else float(np.linalg.norm(A @ x - b))
    info = SolveInfo(method, res, iterations, time.perf_counter() - t0)
    logger.debug("solve %s: n=%d residual=%.2e", method, A.shape[0], res)
    return u, info


@dataclass
class Solution:
    u: np.ndarray
    mesh: Mesh
    k: int
    dofmap: GlobalDofMap
    elements: list
    material: Optional[Material]
    info: Optional[SolveInfo] = None

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs

    def cell_values(self, c: int) -> np.ndarray:
        return self.u[self.dofmap.cell_dofs[c]]

    def vertex_displacements(self) -> np.ndarray:
        out = np.zeros((self.mesh.n_vertices, 2))
        vn = self.dofmap.vertex_node
        used = vn >= 0
        out[used, 0] = self.u[2 * vn[used]]
        out[used, 1] = self.u[2 * vn[used] + 1]
        return out


def solve_problem(mesh: Mesh, k: int, material: Material, bcs: BoundaryConditions,
                  body_load: BodyLoad = None, tau: float = 0.5, method: str = "direct",
                  refine_steps: int = 0) -> Solution:
    """Assemble, constrain and solve in one call."""
    system = assemble(mesh, k, material, tau, body_load, bcs)
    cs = apply_dirichlet(system, bcs)
    u, info = solve(cs, method, system=system, refine_steps=refine_steps)
    return Solution(u, mesh, k, system.dofmap, system.elements, system.material, info)


def interpolate(mesh: Mesh, dofmap: GlobalDofMap, func: Callable[[np.ndarray], np.ndarray],
                quad_degree: Optional[int] = None) -> np.ndarray:
    """Dof vector of the virtual interpolant of ``func``: point values and scaled moments."""
    from .polybasis import eval_monomials, polygon_quadrature

    k = dofmap.k
    u = np.zeros(dofmap.n_dofs)
    vals = _field(func, dofmap.node_points)
    u[0:2 * dofmap.n_point_nodes:2] = vals[:, 0]
    u[1:2 * dofmap.n_point_nodes:2] = vals[:, 1]
    if k >= 2:
        deg = quad_degree if quad_degree is not None else 3 * k
        for c, geom in enumerate(mesh.geometries):
            pts, w = polygon_quadrature(geom.vertices, deg)
            s = geom.scaled(pts)
            q = eval_monomials(k - 2, s[:, 0], s[:, 1])
            mom = q.T @ (w[:, None] * _field(func, pts)) / geom.area
            nodes = dofmap.moment_nodes[c]
            u[2 * nodes] = mom[:, 0]
            u[2 * nodes + 1] = mom[:, 1]
    return u
