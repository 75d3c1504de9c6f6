"""Scaled monomials, strain bases and quadrature on edges and polygons."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from .mesh import ElementGeometry


@lru_cache(maxsize=None)
def monomial_ordering(s: int) -> tuple:
    """Exponent pairs (alpha, beta) of all monomials of degree <= s.

    Rows of Pascal's triangle in turn: (0,0); (1,0),(0,1); (2,0),(1,1),(0,2); ...
    """
    if s < 0:
        return ()
    return tuple((d - b, b) for d in range(s + 1) for b in range(d + 1))


def n_monomials(s: int) -> int:
    return (s + 1) * (s + 2) // 2 if s >= 0 else 0


def monomial_index(alpha: int, beta: int) -> int:
    d = alpha + beta
    return d * (d + 1) // 2 + beta


def eval_monomials(s: int, xi, eta) -> np.ndarray:
    """Monomials of degree <= s at the given scaled points, shape (npts, n_monomials)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    exps = monomial_ordering(s)
    out = np.empty(xi.shape + (len(exps),))
    if not exps:
        return out
    xp = [np.ones_like(xi)]
    yp = [np.ones_like(eta)]
    for _ in range(s):
        xp.append(xp[-1] * xi)
        yp.append(yp[-1] * eta)
    for j, (a, b) in enumerate(exps):
        out[..., j] = xp[a] * yp[b]
    return out


def strain_dim(k: int) -> int:
    return 3 * k * (k + 1) // 2


def eval_strain_basis(k: int, xi: float, eta: float) -> np.ndarray:
    """The 3 x l matrix N^P at one scaled point.

    Column ``3*j + t`` carries monomial ``q_j`` (degree <= k-1) in Voigt row ``t``.
    """
    q = eval_monomials(k - 1, xi, eta)[0]
    return np.kron(q[None, :], np.eye(3))


@dataclass(frozen=True)
class GaussLobattoRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.nodes)

    @property
    def degree(self) -> int:
        return 2 * self.n_points - 3


@lru_cache(maxsize=None)
def gauss_lobatto(p: int) -> GaussLobattoRule:
    """p-point Gauss-Lobatto rule on [-1, 1], exact up to degree 2p - 3.

    Interior nodes are the roots of P'_{p-1}, polished by Newton iteration.
    """
    if p < 2:
        raise ValueError("Gauss-Lobatto needs at least 2 points")
    n = p - 1
    if n == 1:
        interior = np.empty(0)
    else:
        dP = legendre.Legendre.basis(n).deriv()
        d2P = dP.deriv()
        interior = np.sort(dP.roots().real)
        for _ in range(100):
            step = dP(interior) / d2P(interior)
            interior = interior - step
            if np.max(np.abs(step)) < 1e-15:
                break
        # enforce exact symmetry
        interior = 0.5 * (interior - interior[::-1])
    nodes = np.concatenate([[-1.0], interior, [1.0]])
    Pn = legendre.Legendre.basis(n)(nodes)
    weights = 2.0 / (n * (n + 1) * Pn ** 2)
    return GaussLobattoRule(nodes, weights)


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    return legendre.leggauss(n)


@lru_cache(maxsize=None)
def triangle_rule(degree: int):
    """Collapsed (Duffy) Gauss rule on the reference triangle (0,0),(1,0),(0,1).

    Returns barycentric-free reference points (npts, 2) and weights summing to 1/2.
    Exact for polynomials of total degree <= ``degree``.
    """
    nu = (degree + 2) // 2 + 1
    nv = (degree + 1) // 2 + 1
    tu, wu = gauss_legendre(nu)
    tv, wv = gauss_legendre(nv)
    u = 0.5 * (tu + 1.0)
    v = 0.5 * (tv + 1.0)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(0.25 * wu * (1.0 - u), wv)
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    return pts, W.ravel()


def polygon_quadrature(vertices, degree: int):
    """Signed triangle-fan rule from vertex 0, exact for polynomials on any simple polygon.

    Returns physical points (npts, 2) and weights (signed for concave fans).
    """
    verts = np.asarray(vertices, dtype=float)
    ref, w = triangle_rule(degree)
    v0 = verts[0]
    a = verts[1:-1] - v0
    b = verts[2:] - v0
    det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    pts = (v0[None, None, :]
           + ref[None, :, 0:1] * a[:, None, :]
           + ref[None, :, 1:2] * b[:, None, :])
    weights = det[:, None] * w[None, :]
    return pts.reshape(-1, 2), weights.ravel()


@dataclass(frozen=True)
class PolygonMomentTable:
    """Integrals of the scaled monomials over one polygon (physical measure).

    ``values[j]`` is the integral of the j-th monomial in Pascal order.
    """

    max_degree: int
    values: np.ndarray
    area: float

    def __call__(self, alpha: int, beta: int) -> float:
        if alpha + beta > self.max_degree:
            raise KeyError(f"moment ({alpha},{beta}) above tabulated degree {self.max_degree}")
        return float(self.values[monomial_index(alpha, beta)])

    def gram(self, s: int) -> np.ndarray:
        """Matrix of integrals of q_i q_j over the polygon for monomials of degree <= s."""
        exps = monomial_ordering(s)
        idx = np.array([[monomial_index(a1 + a2, b1 + b2) for (a2, b2) in exps]
                        for (a1, b1) in exps], dtype=int).reshape(len(exps), len(exps))
        return self.values[idx]

    def cross(self, s_rows: int, s_cols: int) -> np.ndarray:
        rows = monomial_ordering(s_rows)
        cols = monomial_ordering(s_cols)
        idx = np.array([[monomial_index(a1 + a2, b1 + b2) for (a2, b2) in cols]
                        for (a1, b1) in rows], dtype=int).reshape(len(rows), len(cols))
        return self.values[idx]


def polygon_moments(geom: ElementGeometry, maxdeg: int) -> PolygonMomentTable:
    pts, w = polygon_quadrature(geom.vertices, maxdeg)
    s = geom.scaled(pts)
    vals = eval_monomials(maxdeg, s[:, 0], s[:, 1]).T @ w
    return PolygonMomentTable(maxdeg, vals, geom.area)


@dataclass(frozen=True)
class DivergenceDecomposition:
    """Constant matrices M^j with  div N^P = sum_j M^j q_j.

    ``matrices`` has shape (r, 2, l). They are stored for unit diameter; the
    physical chain-rule factor 1/h_E is applied by :meth:`scaled`.
    """

    k: int
    matrices: np.ndarray

    @property
    def r(self) -> int:
        return self.matrices.shape[0]

    def scaled(self, h: float) -> np.ndarray:
        return self.matrices / h

    def evaluate(self, xi, eta, h: float = 1.0) -> np.ndarray:
        """sum_j M^j q_j(xi, eta), shape (npts, 2, l)."""
        q = eval_monomials(self.k - 2, xi, eta)
        return np.einsum("pj,jab->pab", q, self.scaled(h))


@lru_cache(maxsize=None)
def _divergence_matrices(k: int) -> np.ndarray:
    r = k * (k - 1) // 2
    ell = strain_dim(k)
    M = np.zeros((r, 2, ell))
    for a, (al, be) in enumerate(monomial_ordering(k - 1)):
        # d/dxi and d/deta of q_a as (coefficient, target index)
        dx = (al, monomial_index(al - 1, be)) if al > 0 else None
        dy = (be, monomial_index(al, be - 1)) if be > 0 else None
        c0, c1, c2 = 3 * a, 3 * a + 1, 3 * a + 2
        if dx is not None:
            M[dx[1], 0, c0] += dx[0]
            M[dx[1], 1, c2] += dx[0]
        if dy is not None:
            M[dy[1], 1, c1] += dy[0]
            M[dy[1], 0, c2] += dy[0]
    M.setflags(write=False)
    return M


def divergence_decomposition(k: int) -> DivergenceDecomposition:
    """Expansion of the divergence S^T applied to N^P in the basis q_1..q_r of P_{k-2}."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return DivergenceDecomposition(k, _divergence_matrices(k))


def divergence_of_strain_basis(k: int, xi, eta, h: float = 1.0) -> np.ndarray:
    """Direct evaluation of S^T N^P at scaled points, shape (npts, 2, l).

    Independent of :func:`divergence_decomposition`; differentiates each
    column of N^P termwise.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    exps = monomial_ordering(k - 1)
    out = np.zeros(xi.shape + (2, 3 * len(exps)))
    for a, (al, be) in enumerate(exps):
        ddx = al * xi ** max(al - 1, 0) * eta ** be / h
        ddy = be * xi ** al * eta ** max(be - 1, 0) / h
        out[..., 0, 3 * a] = ddx
        out[..., 1, 3 * a + 1] = ddy
        out[..., 0, 3 * a + 2] = ddy
        out[..., 1, 3 * a + 2] = ddx
    return out
