"""Mesh families for the benchmark problems.

Unit-square families: squares, distorted concave quads, near-collapsed
trapezoids, jittered triangles, hexagons, graded convex quads and Voronoi
tessellations. Plus the two patch-test meshes and Cook's membrane meshes.

Fixed shape parameters (the figures they reproduce are only qualitative):
concave distortion amplitude 0.3 h, trapezoid short side 0.05 h, patch-test
punch depth of a quarter side.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from scipy.spatial import Voronoi, cKDTree

from .mesh import Mesh

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])

COOK_H1 = 44.0
COOK_H2 = 16.0
COOK_L = 48.0
COOK_CORNERS = np.array([[0.0, 0.0], [COOK_L, COOK_H1], [COOK_L, COOK_H1 + COOK_H2], [0.0, COOK_H1]])
COOK_POINT_A = np.array([COOK_L, COOK_H1 + 0.5 * COOK_H2])

CONCAVE_AMPLITUDE = 0.3
TRAPEZOID_SHORT_SIDE = 0.05
CENTROIDAL_LLOYD_ITERS = 20


def _grid(n: int):
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t, indexing="ij")   # X[i, j] = x_i
    return X, Y


def _grid_cells(n: int) -> list:
    def vid(i, j):
        return i * (n + 1) + j
    return [(vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1))
            for j in range(n) for i in range(n)]


def _grid_mesh(X, Y, n) -> Mesh:
    verts = np.column_stack([X.ravel(), Y.ravel()])
    return Mesh(verts, _grid_cells(n))


def unit_square_quads(n: int) -> Mesh:
    """n x n axis-aligned squares."""
    X, Y = _grid(n)
    return _grid_mesh(X, Y, n)


def distorted_concave_quads(n: int, amplitude: float = CONCAVE_AMPLITUDE) -> Mesh:
    """n x n quads with every vertex shifted along the diagonal by +-amplitude*h.

    The sign alternates in a checkerboard; for amplitude > 0.25 each interior
    cell gets one reflex corner. Boundary vertices slide along their side,
    corners stay put.
    """
    X, Y = _grid(n)
    h = 1.0 / n
    I, J = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    s = np.where((I + J) % 2 == 0, 1.0, -1.0) * amplitude * h
    dx = s.copy()
    dy = s.copy()
    dx[(I == 0) | (I == n)] = 0.0
    dy[(J == 0) | (J == n)] = 0.0
    return _grid_mesh(X + dx, Y + dy, n)


def trapezoid_collapsing_quads(n: int, short_side: float = TRAPEZOID_SHORT_SIDE) -> Mesh:
    """Right trapezoids whose short vertical side is ``short_side * h``.

    Odd interior horizontal grid lines zigzag by +-(1 - short_side) h from
    column to column; even lines stay straight.
    """
    X, Y = _grid(n)
    h = 1.0 / n
    I, J = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    shift = np.where(I % 2 == 0, 1.0, -1.0) * (1.0 - short_side) * h
    moved = (J % 2 == 1) & (J < n)
    return _grid_mesh(X, Y + np.where(moved, shift, 0.0), n)


def nonuniform_quads(n: int, amplitude: float = 0.1) -> Mesh:
    """Tensor grid mapped by x + a sin(2 pi x) sin(2 pi y) (same for y); cells stay convex."""
    X, Y = _grid(n)
    bump = amplitude * np.sin(2 * np.pi * X) * np.sin(2 * np.pi * Y)
    return _grid_mesh(X + bump, Y + bump, n)


def nonuniform_triangles(n: int, seed: int = 0, jitter: float = 0.2) -> Mesh:
    """Triangles from a jittered (n+1) x (n+1) grid.

    Interior points move by up to ``jitter * h`` in each direction and
    boundary points slide along their side. Each jittered quad is split
    along the diagonal passing the Delaunay empty-circle test.
    """
    rng = np.random.default_rng(seed)
    X, Y = _grid(n)
    h = 1.0 / n
    dx = rng.uniform(-jitter, jitter, X.shape) * h
    dy = rng.uniform(-jitter, jitter, X.shape) * h
    I, J = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    dx[(I == 0) | (I == n)] = 0.0
    dy[(J == 0) | (J == n)] = 0.0
    verts = np.column_stack([(X + dx).ravel(), (Y + dy).ravel()])
    cells = []
    for a, b, c, d in _grid_cells(n):
        # keep diagonal a-c if d lies outside the circumcircle of (a, b, c)
        if _in_circle(verts[a], verts[b], verts[c], verts[d]):
            cells += [(a, b, d), (b, c, d)]
        else:
            cells += [(a, b, c), (a, c, d)]
    return Mesh(verts, cells)


def _in_circle(a, b, c, d) -> bool:
    m = np.array([[a[0] - d[0], a[1] - d[1], (a[0] - d[0]) ** 2 + (a[1] - d[1]) ** 2],
                  [b[0] - d[0], b[1] - d[1], (b[0] - d[0]) ** 2 + (b[1] - d[1]) ** 2],
                  [c[0] - d[0], c[1] - d[1], (c[0] - d[0]) ** 2 + (c[1] - d[1]) ** 2]])
    return np.linalg.det(m) > 0


# --- Voronoi --------------------------------------------------------------

def _reflect(points: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = (q - p) / np.hypot(*(q - p))
    rel = points - p
    along = rel @ d
    foot = p + along[:, None] * d
    return 2 * foot - points


def _inside_convex(points: np.ndarray, poly: np.ndarray, strict: bool = True) -> np.ndarray:
    ok = np.ones(len(points), dtype=bool)
    for p, q in zip(poly, np.roll(poly, -1, axis=0)):
        cr = (q[0] - p[0]) * (points[:, 1] - p[1]) - (q[1] - p[1]) * (points[:, 0] - p[0])
        ok &= cr > 0 if strict else cr >= 0
    return ok


def _snap_to_boundary(verts: np.ndarray, poly: np.ndarray, tol: float) -> np.ndarray:
    out = verts.copy()
    for p, q in zip(poly, np.roll(poly, -1, axis=0)):
        d = (q - p) / np.hypot(*(q - p))
        nrm = np.array([d[1], -d[0]])
        dist = (out - p) @ nrm
        near = np.abs(dist) < tol
        out[near] -= dist[near, None] * nrm
    for c in poly:
        near = np.hypot(*(out - c).T) < tol
        out[near] = c
    return out


def _clean(verts: np.ndarray, cells: list, tol: float):
    """Merge vertices closer than tol, drop repeated indices, renumber compactly."""
    tree = cKDTree(verts)
    rep = np.arange(len(verts))
    for i, j in sorted(tree.query_pairs(tol)):
        ri, rj = rep[i], rep[j]
        while rep[ri] != ri:
            ri = rep[ri]
        while rep[rj] != rj:
            rj = rep[rj]
        if ri != rj:
            rep[max(ri, rj)] = min(ri, rj)
    for i in range(len(rep)):
        r = i
        while rep[r] != r:
            r = rep[r]
        rep[i] = r
    new_cells = []
    for cell in cells:
        ids = [int(rep[i]) for i in cell]
        dedup = [v for t, v in enumerate(ids) if v != ids[t - 1]]
        if len(dedup) >= 3:
            new_cells.append(dedup)
    used = sorted({i for c in new_cells for i in c})
    remap = {old: new for new, old in enumerate(used)}
    return verts[used], [[remap[i] for i in c] for c in new_cells]


def _mirrored_voronoi(seeds: np.ndarray, domain: np.ndarray) -> Voronoi:
    """Voronoi diagram of the seeds plus their reflections across the domain sides.

    Inside the domain a reflection is never closer than its own seed, so the
    seed cells restricted to the domain are the clipped cells whatever subset
    of reflections is used. Only seeds near a side are reflected at first;
    if some seed cell then pokes out of the domain, all seeds are reflected.
    """
    n = len(seeds)
    area = abs(0.5 * np.sum(domain[:, 0] * np.roll(domain[:, 1], -1)
                            - np.roll(domain[:, 0], -1) * domain[:, 1]))
    cut = 4.0 * np.sqrt(area / n)
    for cutoff in (cut, np.inf):
        pts = [seeds]
        for p, q in zip(domain, np.roll(domain, -1, axis=0)):
            d = (q - p) / np.hypot(*(q - p))
            dist = np.abs((seeds - p) @ np.array([d[1], -d[0]]))
            pts.append(_reflect(seeds[dist < cutoff], p, q))
        vor = Voronoi(np.vstack(pts))
        regions = [vor.regions[i] for i in vor.point_region[:n]]
        if any(-1 in r or len(r) < 3 for r in regions):
            continue
        used = np.unique(np.concatenate(regions))
        scale = float(np.ptp(domain, axis=0).max())
        if _inside_convex_tol(vor.vertices[used], domain, 1e-9 * scale):
            return vor
    return vor


def _inside_convex_tol(points: np.ndarray, poly: np.ndarray, tol: float) -> bool:
    for p, q in zip(poly, np.roll(poly, -1, axis=0)):
        d = (q - p) / np.hypot(*(q - p))
        cr = d[0] * (points[:, 1] - p[1]) - d[1] * (points[:, 0] - p[0])
        if np.any(cr < -tol):
            return False
    return True


def _seed_regions(vor: Voronoi, n: int):
    """Flattened vertex indices of the first n regions, with offsets."""
    regions = [vor.regions[i] for i in vor.point_region[:n]]
    for i, reg in enumerate(regions):
        if -1 in reg or len(reg) < 3:
            raise RuntimeError(f"Voronoi cell of seed {i} is unbounded")
    lengths = np.array([len(r) for r in regions])
    flat = np.fromiter((v for r in regions for v in r), dtype=int, count=int(lengths.sum()))
    return regions, flat, lengths


def _region_centroids(vertices: np.ndarray, flat: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Shoelace centroids of cyclically ordered regions, either orientation."""
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    owner = np.repeat(np.arange(len(lengths)), lengths)
    pos = np.arange(len(flat)) - starts[owner]
    nxt = flat[starts[owner] + (pos + 1) % lengths[owner]]
    p, q = vertices[flat], vertices[nxt]
    cross = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
    area = np.bincount(owner, cross) / 2
    cx = np.bincount(owner, (p[:, 0] + q[:, 0]) * cross) / (6 * area)
    cy = np.bincount(owner, (p[:, 1] + q[:, 1]) * cross) / (6 * area)
    return np.column_stack([cx, cy])


def clipped_voronoi(seeds: np.ndarray, domain: np.ndarray):
    """Voronoi cells of ``seeds`` clipped to a convex CCW polygon.

    Seeds are mirrored across every side of the domain; the Voronoi cells
    of the original seeds in the augmented diagram are exactly the clipped
    cells, and neighbouring cells share vertex indices.
    Returns (vertices, cells) with cells ordered like the seeds.
    """
    seeds = np.asarray(seeds, dtype=float)
    domain = np.asarray(domain, dtype=float)
    vor = _mirrored_voronoi(seeds, domain)
    regions, _, _ = _seed_regions(vor, len(seeds))
    cells = []
    for reg in regions:
        poly = vor.vertices[reg]
        c = poly.mean(axis=0)
        ang = np.arctan2(poly[:, 1] - c[1], poly[:, 0] - c[0])
        cells.append([reg[j] for j in np.argsort(ang)])
    scale = float(np.ptp(domain, axis=0).max())
    verts = _snap_to_boundary(vor.vertices, domain, 1e-10 * scale)
    return _clean(verts, cells, 1e-10 * scale)


def lloyd_step(seeds: np.ndarray, domain: np.ndarray) -> np.ndarray:
    """Move every seed to the centroid of its clipped Voronoi cell."""
    vor = _mirrored_voronoi(seeds, domain)
    _, flat, lengths = _seed_regions(vor, len(seeds))
    return _region_centroids(vor.vertices, flat, lengths)


def _random_points_in(domain: np.ndarray, n: int, rng) -> np.ndarray:
    lo, hi = domain.min(axis=0), domain.max(axis=0)
    out = np.empty((0, 2))
    while len(out) < n:
        cand = rng.uniform(lo, hi, size=(2 * n, 2))
        out = np.vstack([out, cand[_inside_convex(cand, domain)]])
    return out[:n]


def _separate_duplicates(seeds: np.ndarray, domain: np.ndarray, rng) -> np.ndarray:
    scale = float(np.ptp(domain, axis=0).max())
    tol = 1e-9 * scale
    for _ in range(100):
        pairs = cKDTree(seeds).query_pairs(tol, output_type="ndarray")
        if len(pairs) == 0:
            return seeds
        idx = np.unique(pairs[:, 1])
        seeds[idx] += rng.normal(scale=1e-6 * scale, size=(len(idx), 2))
        outside = ~_inside_convex(seeds, domain)
        seeds[outside] = _random_points_in(domain, int(outside.sum()), rng)
    raise RuntimeError("could not separate coincident Voronoi seeds")


def voronoi_seeds(n_seeds: int, lloyd_iters: int, seed: int = 0,
                  domain: Optional[np.ndarray] = None) -> np.ndarray:
    """Random seeds in the domain after ``lloyd_iters`` centroid relaxation sweeps."""
    if n_seeds < 2:
        raise ValueError("need at least two Voronoi seeds")
    domain = UNIT_SQUARE if domain is None else np.asarray(domain, dtype=float)
    rng = np.random.default_rng(seed)
    seeds = _separate_duplicates(_random_points_in(domain, n_seeds, rng), domain, rng)
    for _ in range(lloyd_iters):
        seeds = lloyd_step(seeds, domain)
    return seeds


def voronoi(n_seeds: int, lloyd_iters: int = CENTROIDAL_LLOYD_ITERS, seed: int = 0,
            domain: Optional[Sequence] = None) -> Mesh:
    """Clipped Voronoi tessellation.

    ``lloyd_iters = 0`` gives the random-based family; 20 or more the
    centroid-based one.
    """
    domain = UNIT_SQUARE if domain is None else np.asarray(domain, dtype=float)
    seeds = voronoi_seeds(n_seeds, lloyd_iters, seed, domain)
    verts, cells = clipped_voronoi(seeds, domain)
    return Mesh(verts, cells)


def uniform_hexagons(n: int) -> Mesh:
    """Honeycomb with n rows of cells clipped to the unit square.

    Seeds form a staggered lattice whose column count makes the interior
    cells close to regular hexagons; boundary cells become pentagons or quads.
    """
    m = max(1, int(round(n * np.sqrt(3.0) / 2.0)))
    seeds = []
    for j in range(n):
        y = (j + 0.5) / n
        off = 0.25 if j % 2 == 0 else 0.75
        for i in range(m):
            seeds.append(((i + off) / m, y))
    verts, cells = clipped_voronoi(np.array(seeds), UNIT_SQUARE)
    return Mesh(verts, cells)


# --- patch-test meshes -----------------------------------------------------

def _patch_inner_square(side: float = 1.0 / 3.0, angle: float = np.pi / 3.0) -> np.ndarray:
    center = np.array([0.5, 0.5])
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    corners = (UNIT_SQUARE - center) * side
    return center + corners @ rot.T


def patch_mesh_1a() -> Mesh:
    """Rotated inner square of side 1/3 plus four concave quadrilaterals."""
    inner = _patch_inner_square()
    verts = np.vstack([UNIT_SQUARE, inner])
    cells = [(i, (i + 1) % 4, 4 + (i + 1) % 4, 4 + i) for i in range(4)]
    cells.append((4, 5, 6, 7))
    return Mesh(verts, cells)


def patch_mesh_1b(punch: float = 0.25) -> Mesh:
    """Star-shaped octagon plus four concave pentagons.

    The octagon is the inner square of the 1a mesh with each side midpoint
    pushed inwards by ``punch`` times the side length.
    """
    side = 1.0 / 3.0
    inner = _patch_inner_square(side)
    center = np.array([0.5, 0.5])
    mids = []
    for i in range(4):
        mid = 0.5 * (inner[i] + inner[(i + 1) % 4])
        d = center - mid
        mids.append(mid + punch * side * d / np.hypot(*d))
    verts = np.vstack([UNIT_SQUARE, inner, np.array(mids)])
    cells = [(i, (i + 1) % 4, 4 + (i + 1) % 4, 8 + i, 4 + i) for i in range(4)]
    octagon = []
    for i in range(4):
        octagon += [4 + i, 8 + i]
    cells.append(tuple(octagon))
    return Mesh(verts, cells)


# --- Cook's membrane -------------------------------------------------------

def cook_map(st: np.ndarray) -> np.ndarray:
    """Bilinear map of the unit square onto the Cook trapezoid."""
    s, t = st[:, 0:1], st[:, 1:2]
    P = COOK_CORNERS
    return (1 - s) * (1 - t) * P[0] + s * (1 - t) * P[1] + s * t * P[2] + (1 - s) * t * P[3]


def cook_quads(n: int) -> Mesh:
    """n x n quads mapped onto the Cook trapezoid; point A is a vertex for even n."""
    base = unit_square_quads(n)
    return Mesh(cook_map(base.vertices), base.cells)


def cook_voronoi(n_seeds: int, lloyd_iters: int = CENTROIDAL_LLOYD_ITERS, seed: int = 0) -> Mesh:
    return voronoi(n_seeds, lloyd_iters, seed, domain=COOK_CORNERS)


FAMILIES = {
    "squares": unit_square_quads,
    "concave": distorted_concave_quads,
    "trapezoids": trapezoid_collapsing_quads,
    "quads": nonuniform_quads,
    "triangles": nonuniform_triangles,
    "hexagons": uniform_hexagons,
    "voronoi": lambda n, seed=0: voronoi(n * n, CENTROIDAL_LLOYD_ITERS, seed),
    "voronoi-random": lambda n, seed=0: voronoi(n * n, 0, seed),
}

SEEDED = {"triangles", "voronoi", "voronoi-random"}


def generate(family: str, n: int, seed: int = 0) -> Mesh:
    """Unit-square mesh of the named family at resolution n (n x n cells or equivalent)."""
    try:
        fn = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown mesh family {family!r}; choose from {sorted(FAMILIES)}") from None
    if n < 1:
        raise ValueError("resolution must be >= 1")
    return fn(n, seed=seed) if family in SEEDED else fn(n)
