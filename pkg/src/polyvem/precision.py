"""Iterative refinement with an extended-precision residual.

With the trace-scaled stabilization the vertex dofs of a high-order element
carry stiffness several orders of magnitude above their consistency part, so
double-precision rounding of K alone limits the forward error to about
cond(K) * eps. The residual here re-evaluates the stabilization term from a
long-double copy of D (exact Gauss-Lobatto positions, long-double moments),
which is where nearly all of that rounding sits, and corrects the double
solution with the existing factorization.

On platforms where ``np.longdouble`` is plain double this degrades to
ordinary iterative refinement.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Optional

import numpy as np

from .mesh import ElementGeometry
from .polybasis import gauss_legendre, gauss_lobatto, monomial_ordering

LD = np.longdouble


def _legendre(n: int, x: np.ndarray):
    """P_n(x) and P_n'(x) by the three-term recurrence (interior x only)."""
    p0 = np.ones_like(x)
    if n == 0:
        return p0, np.zeros_like(x)
    p1 = x.copy()
    for j in range(2, n + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    return p1, n * (x * p1 - p0) / (x * x - 1)


@lru_cache(maxsize=None)
def gauss_legendre_ld(n: int):
    """Gauss-Legendre rule polished to long-double accuracy by Newton steps."""
    x = gauss_legendre(n)[0].astype(LD)
    for _ in range(4):
        p, dp = _legendre(n, x)
        x = x - p / dp
    _, dp = _legendre(n, x)
    return x, 2 / ((1 - x * x) * dp * dp)


@lru_cache(maxsize=None)
def lobatto_interior_ld(p: int) -> np.ndarray:
    """Interior nodes of the p-point Gauss-Lobatto rule in long double."""
    n = p - 1
    x = gauss_lobatto(p).nodes[1:-1].astype(LD)
    for _ in range(4):
        P, dP = _legendre(n, x)
        d2P = (2 * x * dP - n * (n + 1) * P) / (1 - x * x)
        x = x - dP / d2P
    return x


def _monomials(s: int, x, y) -> np.ndarray:
    return np.stack([x ** a * y ** b for a, b in monomial_ordering(s)], axis=-1)


def matrix_D_ld(k: int, geom: ElementGeometry) -> np.ndarray:
    """Long-double counterpart of :func:`polyvem.element.matrix_D`.

    The centroid and diameter are taken as the stored doubles, so the
    monomial basis is the same one the double-precision element uses.
    """
    v = geom.vertices.astype(LD)
    xc = geom.centroid.astype(LD)
    h = LD(geom.diameter)
    pts = [v]
    if k > 1:
        s = (lobatto_interior_ld(k + 1) + 1) / 2
        nxt = np.roll(v, -1, axis=0)
        pts.append((v[:, None, :] + s[None, :, None] * (nxt - v)[:, None, :]).reshape(-1, 2))
    P = (np.vstack(pts) - xc) / h
    V = _monomials(k, P[:, 0], P[:, 1])
    if k >= 2:
        deg = 2 * k
        tu, wu = gauss_legendre_ld((deg + 2) // 2 + 1)
        tv, wv = gauss_legendre_ld((deg + 1) // 2 + 1)
        u = (tu + 1) / 2
        w = (tv + 1) / 2
        U, W = np.meshgrid(u, w, indexing="ij")
        ref = np.column_stack([U.ravel(), (W * (1 - U)).ravel()])
        rw = np.outer(wu * (1 - u) / 4, wv).ravel()
        a = v[1:-1] - v[0]
        b = v[2:] - v[0]
        det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        qp = (v[0] + ref[None, :, 0:1] * a[:, None, :] + ref[None, :, 1:2] * b[:, None, :]).reshape(-1, 2)
        qw = (det[:, None] * rw[None, :]).ravel()
        area = det.sum() / 2
        S = (qp - xc) / h
        rows = _monomials(k - 2, S[:, 0], S[:, 1])
        cols = _monomials(k, S[:, 0], S[:, 1])
        V = np.vstack([V, (rows * qw[:, None]).T @ cols / area])
    D = np.zeros((2 * V.shape[0], 2 * V.shape[1]), dtype=LD)
    D[0::2, 0::2] = V
    D[1::2, 1::2] = V
    return D


def _complement(D_ld: np.ndarray, D: np.ndarray, x: np.ndarray, sweeps: int = 3) -> np.ndarray:
    """x - D c with c the least-squares fit, residual kept in long double."""
    xl = x.astype(LD)
    c = np.linalg.lstsq(D, x, rcond=None)[0].astype(LD)
    for _ in range(sweeps):
        r = xl - D_ld @ c
        c = c + np.linalg.lstsq(D, r.astype(float), rcond=None)[0].astype(LD)
    return xl - D_ld @ c


def residual_ld(system, u: np.ndarray, D_ld: Optional[list] = None) -> np.ndarray:
    """rhs - K u for a full dof vector, accumulated in long double.

    ``D_ld`` optionally holds the per-cell long-double D matrices.
    """
    out = system.rhs.astype(LD)
    for c, el in enumerate(system.elements):
        dofs = system.dofmap.cell_dofs[c]
        xe = u[dofs]
        Dc = D_ld[c] if D_ld is not None else matrix_D_ld(el.layout.k, system.mesh.geometries[c])
        ke = el.Kc.astype(LD) @ xe.astype(LD)
        ke += LD(system.tau) * LD(np.trace(el.Kc)) * _complement(Dc, el.D, xe)
        np.add.at(out, dofs, -ke)
    return out


def refine(system, constrained, u: np.ndarray, factor_solve, steps: int = 1) -> np.ndarray:
    """Apply ``steps`` correction sweeps to a full dof vector ``u``."""
    u = u.copy()
    D_ld = [matrix_D_ld(el.layout.k, g) for el, g in zip(system.elements, system.mesh.geometries)]
    for _ in range(steps):
        r = residual_ld(system, u, D_ld)[constrained.free].astype(float)
        u[constrained.free] += factor_solve(r)
    return u


def default_refine_steps(k: int) -> int:
    """One sweep from k = 3 on, where stabilization rounding becomes visible."""
    return 1 if k >= 3 else 0
