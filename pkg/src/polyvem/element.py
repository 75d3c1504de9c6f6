"""Element-level construction of the virtual element stiffness and loads.

Local degrees of freedom follow the usual ordering: the ``m`` vertices, then
``k - 1`` Gauss-Lobatto nodes per edge (edge by edge, along the CCW
traversal), then the ``r = k(k-1)/2`` scaled moments. Each node carries the
pair (u, v) at local indices ``2*node`` and ``2*node + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .mesh import ElementGeometry
from .polybasis import (DivergenceDecomposition, PolygonMomentTable, divergence_decomposition,
                        eval_monomials, gauss_lobatto, n_monomials, polygon_moments,
                        polygon_quadrature, strain_dim)


class ElementError(RuntimeError):
    """Element construction failed (degenerate or ill-conditioned polygon)."""

    def __init__(self, message: str, element: Optional[int] = None, condition: Optional[float] = None):
        self.element = element
        self.condition = condition
        where = f"element {element}: " if element is not None else ""
        extra = f" (condition estimate {condition:.3e})" if condition is not None else ""
        super().__init__(where + message + extra)


@dataclass(frozen=True)
class DofLayout:
    k: int
    m: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.m < 3:
            raise ValueError("a polygon has at least 3 edges")

    @property
    def r(self) -> int:
        return self.k * (self.k - 1) // 2

    @property
    def ell(self) -> int:
        return strain_dim(self.k)

    @property
    def n_boundary_nodes(self) -> int:
        return self.k * self.m

    @property
    def n_nodes(self) -> int:
        return self.k * self.m + self.r

    @property
    def n(self) -> int:
        return 2 * self.k * self.m + self.k * (self.k - 1)

    def vertex(self, i: int) -> tuple:
        return (2 * i, 2 * i + 1)

    def edge_node(self, e: int, j: int) -> tuple:
        node = self.m + e * (self.k - 1) + j
        return (2 * node, 2 * node + 1)

    def moment(self, j: int) -> tuple:
        node = self.k * self.m + j
        return (2 * node, 2 * node + 1)


def dof_layout(k: int, m: int) -> DofLayout:
    return DofLayout(k, m)


@dataclass(frozen=True)
class Material:
    """Constant 3x3 constitutive matrix in Voigt form (engineering shear)."""

    C: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        if C.shape != (3, 3):
            raise ValueError("constitutive matrix must be 3x3")
        if not np.allclose(C, C.T, rtol=1e-12, atol=0.0):
            raise ValueError("constitutive matrix must be symmetric")
        if np.linalg.eigvalsh(C).min() <= 0:
            raise ValueError("constitutive matrix must be positive definite")
        object.__setattr__(self, "C", C)

    @classmethod
    def from_lame(cls, lam: float, mu: float) -> "Material":
        return cls(np.array([[lam + 2 * mu, lam, 0.0],
                             [lam, lam + 2 * mu, 0.0],
                             [0.0, 0.0, mu]]))

    @classmethod
    def plane_strain(cls, E: float, nu: float) -> "Material":
        lam = E * nu / ((1 + nu) * (1 - 2 * nu))
        mu = E / (2 * (1 + nu))
        return cls.from_lame(lam, mu)

    def scaled(self, factor: float) -> "Material":
        return Material(self.C * factor)


@dataclass(frozen=True)
class StabilizationConfig:
    tau: float = 0.5

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"stabilization factor tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class ElementMatrices:
    layout: DofLayout
    G: np.ndarray
    B: np.ndarray
    Pi: np.ndarray
    D: np.ndarray
    Kc: np.ndarray
    Ks: np.ndarray

    @property
    def K(self) -> np.ndarray:
        return self.Kc + self.Ks


ConstitutiveField = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


def boundary_nodes(k: int, geom: ElementGeometry) -> np.ndarray:
    """Physical coordinates of vertices then edge Gauss-Lobatto nodes, shape (k*m, 2)."""
    verts = geom.vertices
    if k == 1:
        return verts.copy()
    t = gauss_lobatto(k + 1).nodes[1:-1]
    s = 0.5 * (t + 1.0)
    nxt = np.roll(verts, -1, axis=0)
    inner = verts[:, None, :] + s[None, :, None] * (nxt - verts)[:, None, :]
    return np.vstack([verts, inner.reshape(-1, 2)])


def matrix_D(k: int, geom: ElementGeometry, layout: DofLayout,
             moments: Optional[PolygonMomentTable] = None) -> np.ndarray:
    """Change of basis from (P_k)^2 in scaled monomials to the local dofs."""
    pts = geom.scaled(boundary_nodes(k, geom))
    V = eval_monomials(k, pts[:, 0], pts[:, 1])
    if k >= 2:
        if moments is None:
            moments = polygon_moments(geom, 2 * k)
        V = np.vstack([V, moments.cross(k - 2, k) / geom.area])
    return np.kron(V, np.eye(2))


def matrix_G(k: int, geom: ElementGeometry, moments: Optional[PolygonMomentTable] = None) -> np.ndarray:
    if moments is None:
        moments = polygon_moments(geom, 2 * k)
    return np.kron(moments.gram(k - 1), np.eye(3))


def matrix_B(k: int, geom: ElementGeometry, layout: DofLayout,
             decomposition: Optional[DivergenceDecomposition] = None) -> np.ndarray:
    """Right-hand side of the strain projection, l x n.

    The boundary integral uses the (k+1)-point Gauss-Lobatto rule on each
    edge; its points are the boundary dofs, where the basis is 0 or 1. The
    interior part only touches the moment dofs.
    """
    m = layout.m
    nb = layout.n_boundary_nodes
    nq = n_monomials(k - 1)
    gl = gauss_lobatto(k + 1)
    # per-node sum of (weight * normal) over the edges meeting at the node
    g = np.zeros((nb, 2))
    half = 0.5 * geom.edge_lengths
    wn = half[:, None] * geom.normals
    g[:m] += gl.weights[0] * wn
    g[:m] += gl.weights[-1] * np.roll(wn, 1, axis=0)
    if k >= 2:
        inner = gl.weights[1:-1][None, :, None] * wn[:, None, :]
        g[m:] = inner.reshape(-1, 2)
    pts = geom.scaled(boundary_nodes(k, geom))
    Q = eval_monomials(k - 1, pts[:, 0], pts[:, 1])  # (nb, nq)
    B = np.zeros((nq, 3, layout.n_nodes, 2))
    B[:, 0, :nb, 0] = Q.T * g[:, 0]
    B[:, 1, :nb, 1] = Q.T * g[:, 1]
    B[:, 2, :nb, 0] = Q.T * g[:, 1]
    B[:, 2, :nb, 1] = Q.T * g[:, 0]
    B = B.reshape(3 * nq, 2 * layout.n_nodes)
    if k >= 2:
        if decomposition is None:
            decomposition = divergence_decomposition(k)
        Mj = decomposition.scaled(geom.diameter)
        for j in range(layout.r):
            iu, iv = layout.moment(j)
            B[:, iu] -= geom.area * Mj[j, 0, :]
            B[:, iv] -= geom.area * Mj[j, 1, :]
    return B


def projector(G: np.ndarray, B: np.ndarray, element: Optional[int] = None) -> np.ndarray:
    """Solve G Pi = B by Cholesky."""
    try:
        factor = cho_factor(G)
    except LinAlgError as exc:
        raise ElementError("Gram matrix G is not positive definite", element,
                           float(np.linalg.cond(G))) from exc
    return cho_solve(factor, B)


def middle_matrix(k: int, geom: ElementGeometry, C: ConstitutiveField,
                  moments: Optional[PolygonMomentTable] = None) -> np.ndarray:
    """Integral of (N^P)^T C N^P over the element.

    ``C`` is a constant 3x3 array or a callable returning (npts, 3, 3) at
    physical points.
    """
    if callable(C):
        pts, w = polygon_quadrature(geom.vertices, 2 * k + 2)
        s = geom.scaled(pts)
        q = eval_monomials(k - 1, s[:, 0], s[:, 1])
        Cp = np.asarray(C(pts), dtype=float).reshape(len(pts), 3, 3)
        H = np.einsum("p,pa,pb,pst->asbt", w, q, q, Cp)
        nq = q.shape[1]
        return H.reshape(3 * nq, 3 * nq)
    if moments is None:
        moments = polygon_moments(geom, 2 * k)
    return np.kron(moments.gram(k - 1), np.asarray(C, dtype=float))


def stiffness_consistent(Pi: np.ndarray, H: np.ndarray) -> np.ndarray:
    Kc = Pi.T @ H @ Pi
    return 0.5 * (Kc + Kc.T)


def stiffness_stabilization(Kc: np.ndarray, D: np.ndarray, tau: float,
                            element: Optional[int] = None) -> np.ndarray:
    """tau * tr(Kc) * (I - D (D^T D)^-1 D^T).

    The complement projector is formed from a thin QR factorization of D,
    which is the same matrix as the normal-equation form but keeps
    ``Ks @ D`` at roundoff level.
    """
    StabilizationConfig(tau)
    Qd, R = np.linalg.qr(D)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-13 * diag.max():
        raise ElementError("matrix D is rank deficient", element,
                           float(diag.max() / max(diag.min(), 1e-300)))
    P = np.eye(D.shape[0]) - Qd @ Qd.T
    P = 0.5 * (P + P.T)
    return tau * np.trace(Kc) * P


def build_element(geom: ElementGeometry, k: int, C: ConstitutiveField, tau: float = 0.5,
                  element: Optional[int] = None) -> ElementMatrices:
    """All element matrices for one polygon."""
    layout = DofLayout(k, geom.n_edges)
    moments = polygon_moments(geom, 2 * k)
    G = matrix_G(k, geom, moments)
    B = matrix_B(k, geom, layout)
    Pi = projector(G, B, element)
    H = middle_matrix(k, geom, C, moments)
    Kc = stiffness_consistent(Pi, H)
    D = matrix_D(k, geom, layout, moments)
    Ks = stiffness_stabilization(Kc, D, tau, element)
    return ElementMatrices(layout, G, B, Pi, D, Kc, Ks)


BodyLoad = Union[None, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def _eval_load(b: BodyLoad, pts: np.ndarray) -> np.ndarray:
    if callable(b):
        return np.asarray(b(pts), dtype=float).reshape(len(pts), 2)
    return np.broadcast_to(np.asarray(b, dtype=float).reshape(1, 2), (len(pts), 2))


def integrate_load(geom: ElementGeometry, b: BodyLoad, degree: int = 4) -> np.ndarray:
    """Component-wise integral of b over the element."""
    if not callable(b):
        return geom.area * np.asarray(b, dtype=float).reshape(2)
    pts, w = polygon_quadrature(geom.vertices, degree)
    return w @ _eval_load(b, pts)


def load_k1(geom: ElementGeometry, bbar, k: int = 1) -> np.ndarray:
    """Vertex rule for k = 1: every vertex receives bbar / m."""
    if k != 1:
        raise ValueError("the vertex load rule is only defined for k = 1")
    m = geom.n_edges
    bbar = np.asarray(bbar, dtype=float).reshape(2)
    return np.tile(bbar / m, m)


def load_general(k: int, geom: ElementGeometry, b: BodyLoad,
                 moments: Optional[PolygonMomentTable] = None,
                 quad_degree: Optional[int] = None) -> np.ndarray:
    """Load vector from the L2 projection of b onto (P_{k-2})^2; nonzero on moment dofs only."""
    if k < 2:
        raise ValueError("load_general requires k >= 2")
    layout = DofLayout(k, geom.n_edges)
    f = np.zeros(layout.n)
    if b is None:
        return f
    if moments is None:
        moments = polygon_moments(geom, 2 * k)
    if quad_degree is None:
        quad_degree = 2 * k + 2
    Mq = moments.gram(k - 2)
    if callable(b):
        pts, w = polygon_quadrature(geom.vertices, quad_degree)
        s = geom.scaled(pts)
        q = eval_monomials(k - 2, s[:, 0], s[:, 1])
        rhs = q.T @ (w[:, None] * _eval_load(b, pts))  # (r, 2)
    else:
        rhs = np.outer(moments.cross(k - 2, 0)[:, 0], np.asarray(b, dtype=float).reshape(2))
    try:
        coeffs = cho_solve(cho_factor(Mq), rhs)
    except LinAlgError as exc:
        raise ElementError("load Gram matrix Q is not positive definite",
                           condition=float(np.linalg.cond(Mq))) from exc
    start = 2 * layout.n_boundary_nodes
    f[start:] = geom.area * coeffs.ravel()
    return f


def element_load(k: int, geom: ElementGeometry, b: BodyLoad,
                 moments: Optional[PolygonMomentTable] = None) -> np.ndarray:
    if b is None:
        return np.zeros(DofLayout(k, geom.n_edges).n)
    if k == 1:
        return load_k1(geom, integrate_load(geom, b))
    return load_general(k, geom, b, moments)


def neumann_edge(k: int, p0, p1, traction, normal=None) -> np.ndarray:
    """Gauss-Lobatto approximation of the traction work on one edge.

    Returns an array (k+1, 2): contributions at the start vertex, the k-1
    interior nodes in order from ``p0`` to ``p1``, then the end vertex.
    ``traction`` is a 2-vector or a callable ``(points, normal) -> (npts, 2)``.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    gl = gauss_lobatto(k + 1)
    s = 0.5 * (gl.nodes + 1.0)
    pts = p0 + s[:, None] * (p1 - p0)
    L = float(np.hypot(*(p1 - p0)))
    if normal is None:
        t = (p1 - p0) / L
        normal = np.array([t[1], -t[0]])
    if callable(traction):
        tv = np.asarray(traction(pts, normal), dtype=float).reshape(len(pts), 2)
    else:
        tv = np.broadcast_to(np.asarray(traction, dtype=float).reshape(1, 2), (len(pts), 2))
    return (0.5 * L * gl.weights)[:, None] * tv
