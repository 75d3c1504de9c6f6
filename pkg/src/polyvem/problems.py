"""Catalog of benchmark problems with loads, boundary conditions and exact solutions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .assembly import BoundaryConditions, DirichletBC, NeumannBC, PointConstraint
from .element import Material
from .mesh import Mesh
from .meshgen import COOK_L

Vector = Callable[[np.ndarray], np.ndarray]


@dataclass
class ProblemSpec:
    """Material, load and boundary conditions, plus the exact solution when known.

    ``exact_gradient(points)`` returns (npts, 2, 2) with ``[i, j] = du_i/dx_j``;
    ``exact_strain`` is derived from it in Voigt form (eps_xx, eps_yy, gamma_xy).
    """

    name: str
    material: Material
    bcs: BoundaryConditions
    body_load: Optional[Vector] = None
    exact_displacement: Optional[Vector] = None
    exact_gradient: Optional[Vector] = None
    exact_stress: Optional[np.ndarray] = None    # constant stress for the patch tests
    notes: dict = field(default_factory=dict)

    @property
    def has_exact(self) -> bool:
        return self.exact_displacement is not None and self.exact_gradient is not None

    def exact_strain(self, points: np.ndarray) -> np.ndarray:
        g = np.asarray(self.exact_gradient(points)).reshape(len(points), 2, 2)
        return np.column_stack([g[:, 0, 0], g[:, 1, 1], g[:, 0, 1] + g[:, 1, 0]])


def _on(coord: int, value: float, tol: float = 1e-10):
    def where(p):
        return np.abs(np.asarray(p)[:, coord] - value) <= tol * max(1.0, abs(value))
    return where


def _everywhere(p):
    return np.ones(len(p), dtype=bool)


def _poly_field(fn):
    """Wrap a scalar-pair function of (x, y) into a points -> (npts, 2) field."""
    def field_(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return np.column_stack(fn(p[:, 0], p[:, 1]))
    return field_


def _grad_field(fn):
    def grad(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        ux, uy, vx, vy = fn(p[:, 0], p[:, 1])
        return np.stack([np.column_stack([ux, uy]), np.column_stack([vx, vy])], axis=1)
    return grad


# --- patch tests -----------------------------------------------------------

PATCH_E = 7000.0
PATCH_NU = 0.3
PATCH_Q = 2000.0
PATCH_T = 400.0


def patch_tension(q: float = PATCH_Q, E: float = PATCH_E, nu: float = PATCH_NU) -> ProblemSpec:
    """Uniaxial plane-strain tension on the unit square (Test 1a)."""
    mat = Material.plane_strain(E, nu)
    exx = q * (1 - nu ** 2) / E
    eyy = -q * nu * (1 + nu) / E
    bcs = BoundaryConditions(
        dirichlet=[DirichletBC(_on(0, 0.0), components=(0,))],
        neumann=[NeumannBC(_on(0, 1.0), (q, 0.0))],
        points=[PointConstraint((0.0, 0.0), components=(1,))],
    )
    return ProblemSpec(
        "1a", mat, bcs,
        exact_displacement=_poly_field(lambda x, y: (exx * x, eyy * y)),
        exact_gradient=_grad_field(lambda x, y: (exx + 0 * x, 0 * x, 0 * x, eyy + 0 * x)),
        exact_stress=np.array([q, 0.0, 0.0]),
    )


def patch_shear(t: float = PATCH_T, E: float = PATCH_E, nu: float = PATCH_NU) -> ProblemSpec:
    """Pure shear by tangential traction on the whole boundary (Test 1b).

    Rigid motions are removed by fixing both components at (0, 0) and the
    vertical one at (1, 0); the exact field is then u = (t/mu) y, v = 0.
    """
    mat = Material.plane_strain(E, nu)
    mu = E / (2 * (1 + nu))
    g = t / mu

    def traction(pts, n):
        return np.tile([t * n[1], t * n[0]], (len(pts), 1))

    bcs = BoundaryConditions(
        neumann=[NeumannBC(_everywhere, traction)],
        points=[PointConstraint((0.0, 0.0)), PointConstraint((1.0, 0.0), components=(1,))],
    )
    return ProblemSpec(
        "1b", mat, bcs,
        exact_displacement=_poly_field(lambda x, y: (g * y, 0 * x)),
        exact_gradient=_grad_field(lambda x, y: (0 * x, g + 0 * x, 0 * x, 0 * x)),
        exact_stress=np.array([0.0, 0.0, t]),
    )


# --- convergence tests -----------------------------------------------------

def cubic_harmonic(lam: float = 1.0, mu: float = 1.0) -> ProblemSpec:
    """Test 2a: u = x^3 - 3xy^2, v = y^3 - 3x^2 y, no body load, Dirichlet data everywhere."""
    mat = Material.from_lame(lam, mu)
    u = _poly_field(lambda x, y: (x ** 3 - 3 * x * y ** 2, y ** 3 - 3 * x ** 2 * y))
    grad = _grad_field(lambda x, y: (3 * x ** 2 - 3 * y ** 2, -6 * x * y,
                                     -6 * x * y, 3 * y ** 2 - 3 * x ** 2))
    bcs = BoundaryConditions(dirichlet=[DirichletBC(_everywhere, u)])
    return ProblemSpec("2a", mat, bcs, body_load=None, exact_displacement=u, exact_gradient=grad)


def sine_product(lam: float = 1.0, mu: float = 1.0) -> ProblemSpec:
    """Test 2b: u = v = sin(pi x) sin(pi y), homogeneous Dirichlet data."""
    mat = Material.from_lame(lam, mu)
    pi = np.pi

    def disp(x, y):
        s = np.sin(pi * x) * np.sin(pi * y)
        return s, s

    def grad(x, y):
        gx = pi * np.cos(pi * x) * np.sin(pi * y)
        gy = pi * np.sin(pi * x) * np.cos(pi * y)
        return gx, gy, gx, gy

    def load(p):
        x, y = p[:, 0], p[:, 1]
        ss = np.sin(pi * x) * np.sin(pi * y)
        cc = np.cos(pi * x) * np.cos(pi * y)
        b = -pi ** 2 * (-(3 * mu + lam) * ss + (mu + lam) * cc)
        return np.column_stack([b, b])

    bcs = BoundaryConditions(dirichlet=[DirichletBC(_everywhere, (0.0, 0.0))])
    return ProblemSpec("2b", mat, bcs, body_load=load, exact_displacement=_poly_field(disp),
                       exact_gradient=_grad_field(grad))


# --- Cook's membrane -------------------------------------------------------

COOK_E = 70.0
COOK_NU = 1.0 / 3.0
COOK_Q = 6.25


def cook_membrane(E: float = COOK_E, nu: float = COOK_NU, q: float = COOK_Q) -> ProblemSpec:
    """Tapered cantilever clamped on the left, vertical shear traction on the right edge."""
    mat = Material.plane_strain(E, nu)
    bcs = BoundaryConditions(
        dirichlet=[DirichletBC(_on(0, 0.0))],
        neumann=[NeumannBC(_on(0, COOK_L), (0.0, q))],
    )
    return ProblemSpec("cook", mat, bcs)


CATALOG = {
    "1a": patch_tension,
    "1b": patch_shear,
    "2a": cubic_harmonic,
    "2b": sine_product,
    "cook": cook_membrane,
}


def get_problem(name: str, **kwargs) -> ProblemSpec:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(CATALOG)}") from None
    return factory(**kwargs)


# --- consistency checks ----------------------------------------------------

def stress_of_gradient(material: Material, grad: np.ndarray) -> np.ndarray:
    eps = np.column_stack([grad[:, 0, 0], grad[:, 1, 1], grad[:, 0, 1] + grad[:, 1, 0]])
    return eps @ material.C.T


def equilibrium_residual(problem: ProblemSpec, points: np.ndarray, step: float = 1e-5) -> float:
    """max |div sigma(u_ex) + b| at the points, by central differences of the exact stress.

    Returned relative to the largest stress-derivative magnitude (or 1).
    """
    if not problem.has_exact:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    pts = np.atleast_2d(np.asarray(points, dtype=float))

    def sig(p):
        return stress_of_gradient(problem.material, problem.exact_gradient(p))

    ex = np.array([step, 0.0])
    ey = np.array([0.0, step])
    dsx = (sig(pts + ex) - sig(pts - ex)) / (2 * step)
    dsy = (sig(pts + ey) - sig(pts - ey)) / (2 * step)
    div = np.column_stack([dsx[:, 0] + dsy[:, 2], dsx[:, 2] + dsy[:, 1]])
    b = np.zeros_like(div) if problem.body_load is None else np.asarray(problem.body_load(pts))
    scale = max(1.0, float(np.abs(np.hstack([dsx, dsy])).max()))
    return float(np.abs(div + b).max() / scale)


def boundary_data_mismatch(problem: ProblemSpec, mesh: Mesh) -> float:
    """Largest violation of the Dirichlet and Neumann data by the exact solution.

    Sampled at the end points and midpoints of the selected boundary edges.
    """
    if not problem.has_exact:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    ob = mesh.oriented_boundary_edges
    a = mesh.vertices[ob[:, 0]]
    b = mesh.vertices[ob[:, 1]]
    worst = 0.0
    for bc in problem.bcs.dirichlet:
        for pa, pb in zip(a, b):
            seg = np.array([pa, 0.5 * (pa + pb), pb])
            if not np.all(bc.where(seg)):
                continue
            want = bc.value(seg) if callable(bc.value) else np.tile(bc.value, (3, 1))
            got = problem.exact_displacement(seg)
            for c in bc.components:
                worst = max(worst, float(np.abs(np.asarray(want)[:, c] - got[:, c]).max()))
    for bc in problem.bcs.neumann:
        for pa, pb in zip(a, b):
            seg = np.array([pa, 0.5 * (pa + pb), pb])
            if not np.all(bc.where(seg)):
                continue
            t = pb - pa
            n = np.array([t[1], -t[0]]) / np.hypot(*t)
            want = bc.traction(seg, n) if callable(bc.traction) else np.tile(bc.traction, (3, 1))
            s = stress_of_gradient(problem.material, problem.exact_gradient(seg))
            got = np.column_stack([s[:, 0] * n[0] + s[:, 2] * n[1], s[:, 2] * n[0] + s[:, 1] * n[1]])
            scale = max(1.0, float(np.abs(want).max()))
            worst = max(worst, float(np.abs(np.asarray(want) - got).max()) / scale)
    for pc in problem.bcs.points:
        got = problem.exact_displacement(np.asarray([pc.point], dtype=float))[0]
        for c in pc.components:
            worst = max(worst, abs(float(pc.value[c]) - float(got[c])))
    return worst
