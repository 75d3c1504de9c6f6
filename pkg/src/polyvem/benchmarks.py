"""Drivers for the benchmark studies and the config-file solve pipeline."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import meshgen
from .assembly import (BoundaryConditions, DirichletBC, NeumannBC, PointConstraint, Solution,
                       solve_problem)
from .element import Material
from .mesh import Mesh
from .postproc import boundary_trace, error_D1, error_D2, sample_stress
from .precision import default_refine_steps
from .problems import ProblemSpec, get_problem

logger = logging.getLogger(__name__)

PATCH_TOLERANCE = 1e-9
DEFAULT_TAU = 0.5
DEFAULT_FAMILY = {"2a": "squares", "2b": "hexagons"}
COOK_FAMILIES = ("quads", "voronoi", "voronoi-random")


def fit_slope(h: Sequence[float], err: Sequence[float]) -> float:
    """Least-squares slope of log(err) against log(h); nan if any error is not positive."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if len(h) < 2 or np.any(err <= 0) or not np.all(np.isfinite(err)):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def aitken_limit(values: Sequence[float]) -> float:
    """Extrapolated limit from the last three terms of a geometric-rate sequence."""
    if len(values) < 3:
        raise ValueError("need at least three values to extrapolate")
    v1, v2, v3 = (float(v) for v in values[-3:])
    denom = (v3 - v2) - (v2 - v1)
    if denom == 0.0:
        return v3
    return v3 - (v3 - v2) ** 2 / denom


# --- patch tests -----------------------------------------------------------

@dataclass
class PatchResult:
    test: str
    k: int
    max_deviation: float     # relative to the largest exact stress component
    tolerance: float
    n_samples: int
    solution: Optional[Solution] = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance


def patch_mesh(test: str) -> Mesh:
    if test == "1a":
        return meshgen.patch_mesh_1a()
    if test == "1b":
        return meshgen.patch_mesh_1b()
    raise ValueError(f"unknown patch test {test!r}; choose 1a or 1b")


def run_patch(test: str, k: int, grid: int = 100, tol: float = PATCH_TOLERANCE,
              refine_steps: int = 3) -> PatchResult:
    """Solve a patch test and compare the projected stress with the exact constant stress.

    The grid covers the closed unit square with ``grid`` points per side.
    """
    mesh = patch_mesh(test)
    problem = get_problem(test)
    sol = solve_problem(mesh, k, problem.material, problem.bcs, tau=DEFAULT_TAU,
                        refine_steps=refine_steps)
    t = np.linspace(0.0, 1.0, grid)
    X, Y = np.meshgrid(t, t)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    sig = sample_stress(sol, pts)
    ref = problem.exact_stress
    dev = float(np.abs(sig - ref).max() / np.abs(ref).max())
    return PatchResult(test, k, dev, tol, len(pts), sol)


# --- convergence -----------------------------------------------------------

@dataclass
class LevelResult:
    level: int
    n: int
    h: float
    ndofs: int
    D1: Optional[float] = None
    D2: Optional[float] = None
    vA: Optional[float] = None
    note: str = ""

    def row(self) -> dict:
        return {"level": self.level, "h": self.h, "ndofs": self.ndofs,
                "D1": self.D1, "D2": self.D2, "vA": self.vA}


@dataclass
class ConvergenceResult:
    test: str
    family: str
    k: int
    levels: list

    @property
    def slope_D1(self) -> float:
        return fit_slope([r.h for r in self.levels], [r.D1 for r in self.levels])

    @property
    def slope_D2(self) -> float:
        return fit_slope([r.h for r in self.levels], [r.D2 for r in self.levels])


def level_resolution(level: int, base: int = 8) -> int:
    return base * 2 ** level


def _convergence_level(args):
    test, family, k, level, n, seed, tau, method, refine_steps, vtk_dir = args
    problem = get_problem(test)
    mesh = meshgen.generate(family, n, seed)
    sol = solve_problem(mesh, k, problem.material, problem.bcs, problem.body_load, tau, method,
                        refine_steps)
    d1 = error_D1(sol, problem.exact_strain)
    d2 = error_D2(sol, problem.exact_displacement, problem.exact_gradient)
    if vtk_dir is not None:
        from .postproc import export_vtk
        export_vtk(mesh, sol, Path(vtk_dir) / f"solution_{level}.vtk")
    return LevelResult(level, n, float(mesh.h_max), sol.n_dofs, d1, d2)


def _run_levels(worker, tasks: list, jobs: int) -> list:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(worker, tasks))
    else:
        results = [worker(t) for t in tasks]
    return sorted(results, key=lambda r: r.level)


def run_convergence(test: str, family: Optional[str] = None, k: int = 1, levels: int = 4,
                    base: int = 8, seed: int = 0, tau: float = DEFAULT_TAU, method: str = "direct",
                    jobs: int = 1, vtk_dir=None,
                    refine_steps: Optional[int] = None) -> ConvergenceResult:
    """Errors D1 and D2 on ``levels`` successively halved meshes of one family.

    ``refine_steps`` defaults to :func:`polyvem.precision.default_refine_steps`
    (ignored by the CG solver).
    """
    if test not in ("2a", "2b"):
        raise ValueError(f"convergence study needs test 2a or 2b, got {test!r}")
    if k < 1 or levels < 1:
        raise ValueError("k and levels must be >= 1")
    family = family or DEFAULT_FAMILY[test]
    if family not in meshgen.FAMILIES:
        raise ValueError(f"unknown mesh family {family!r}; choose from {sorted(meshgen.FAMILIES)}")
    if refine_steps is None:
        refine_steps = default_refine_steps(k) if method == "direct" else 0
    tasks = [(test, family, k, lev, level_resolution(lev, base), seed, tau, method, refine_steps,
              vtk_dir) for lev in range(levels)]
    rows = _run_levels(_convergence_level, tasks, jobs)
    for r in rows:
        logger.info("%s %s k=%d level %d: h=%.4g ndofs=%d D1=%.4e D2=%.4e",
                    test, family, k, r.level, r.h, r.ndofs, r.D1, r.D2)
    return ConvergenceResult(test, family, k, rows)


# --- stabilization sweep ---------------------------------------------------

DEFAULT_ALPHA0 = (1e-2, 1e-1, 1.0, 1e1, 1e2)
STABSWEEP_RESOLUTION = 16


@dataclass
class SweepResult:
    family: str
    k: int
    rows: list     # dicts with alpha0, tau, h, ndofs, D1

    @property
    def ratio(self) -> float:
        d = [r["D1"] for r in self.rows]
        return max(d) / min(d)


def run_stabsweep(family: str, k: int, alpha0: Sequence[float] = DEFAULT_ALPHA0,
                  n: int = STABSWEEP_RESOLUTION, seed: int = 0, test: str = "2a",
                  refine_steps: Optional[int] = None, vtk_dir=None) -> SweepResult:
    """D1 of one test on one mesh for stabilization factors tau = alpha0 / 2.

    With ``vtk_dir`` the solution for the i-th factor goes to ``solution_<i>.vtk``.
    """
    if any(a <= 0 for a in alpha0):
        raise ValueError("alpha0 values must be positive")
    problem = get_problem(test)
    mesh = meshgen.generate(family, n, seed)
    if refine_steps is None:
        refine_steps = default_refine_steps(k)
    rows = []
    for i, a in enumerate(alpha0):
        tau = a / 2.0
        sol = solve_problem(mesh, k, problem.material, problem.bcs, problem.body_load, tau,
                            refine_steps=refine_steps)
        d1 = error_D1(sol, problem.exact_strain)
        if vtk_dir is not None:
            from .postproc import export_vtk
            export_vtk(mesh, sol, Path(vtk_dir) / f"solution_{i}.vtk")
        rows.append({"alpha0": float(a), "tau": tau, "h": float(mesh.h_max),
                     "ndofs": sol.n_dofs, "D1": d1})
        logger.info("stabsweep %s k=%d alpha0=%g: D1=%.4e", family, k, a, d1)
    return SweepResult(family, k, rows)


# --- Cook's membrane -------------------------------------------------------

@dataclass
class CookResult:
    family: str
    k: int
    levels: list

    @property
    def values(self) -> list:
        return [r.vA for r in self.levels]

    @property
    def limit(self) -> float:
        return aitken_limit(self.values)

    @property
    def monotone(self) -> bool:
        d = np.diff(self.values)
        return bool(np.all(d > 0) or np.all(d < 0))


def cook_mesh(family: str, n: int, seed: int = 0) -> Mesh:
    if family == "quads":
        return meshgen.cook_quads(n)
    if family == "voronoi":
        return meshgen.cook_voronoi(n * n, meshgen.CENTROIDAL_LLOYD_ITERS, seed)
    if family == "voronoi-random":
        return meshgen.cook_voronoi(n * n, 0, seed)
    raise ValueError(f"unknown Cook mesh family {family!r}; choose from {list(COOK_FAMILIES)}")


def tip_displacement(sol: Solution, point=meshgen.COOK_POINT_A) -> tuple:
    """Vertical displacement at ``point`` on the boundary and the distance to the nearest vertex.

    The value comes from the displacement trace of the boundary edge through
    the point, which equals the vertex dof whenever a vertex sits there.
    """
    mesh = sol.mesh
    bverts = np.unique(mesh.oriented_boundary_edges)
    d = np.hypot(*(mesh.vertices[bverts] - np.asarray(point)).T)
    return float(boundary_trace(sol, point)[1]), float(d.min())


def cook_level_resolution(level: int, base: int = 4) -> int:
    return base * 2 ** level


def _cook_level(args):
    family, k, level, n, seed, vtk_dir = args
    problem = get_problem("cook")
    mesh = cook_mesh(family, n, seed)
    sol = solve_problem(mesh, k, problem.material, problem.bcs, None, DEFAULT_TAU,
                        refine_steps=default_refine_steps(k))
    vA, dist = tip_displacement(sol)
    if vtk_dir is not None:
        from .postproc import export_vtk
        export_vtk(mesh, sol, Path(vtk_dir) / f"solution_{level}.vtk")
    return LevelResult(level, n, float(mesh.h_max), sol.n_dofs, vA=vA,
                       note=f"nearest vertex to point A at distance {dist:.3g}")


def run_cook(family: str = "quads", k: int = 2, levels: int = 4, base: int = 4, seed: int = 0,
             jobs: int = 1, vtk_dir=None) -> CookResult:
    if k < 1 or levels < 1:
        raise ValueError("k and levels must be >= 1")
    if family not in COOK_FAMILIES:
        raise ValueError(f"unknown Cook mesh family {family!r}; choose from {list(COOK_FAMILIES)}")
    tasks = [(family, k, lev, cook_level_resolution(lev, base), seed, vtk_dir)
             for lev in range(levels)]
    rows = _run_levels(_cook_level, tasks, jobs)
    for r in rows:
        logger.info("cook %s k=%d level %d: h=%.4g ndofs=%d vA=%.6f (%s)",
                    family, k, r.level, r.h, r.ndofs, r.vA, r.note)
    return CookResult(family, k, rows)


# --- config-file problems --------------------------------------------------

class ConfigError(ValueError):
    """A problem configuration file is malformed."""


_SIDES = ("left", "right", "bottom", "top", "all")


def _region(spec, mesh: Mesh, where: str):
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    tol = 1e-10 * max(1.0, float(np.abs(mesh.vertices).max()))
    if isinstance(spec, str):
        if spec not in _SIDES:
            raise ConfigError(f"{where}: 'on' must be one of {list(_SIDES)} or "
                              f"{{\"x\": value}} / {{\"y\": value}}, got {spec!r}")
        if spec == "all":
            return lambda p: np.ones(len(p), dtype=bool)
        axis, val = {"left": (0, lo[0]), "right": (0, hi[0]),
                     "bottom": (1, lo[1]), "top": (1, hi[1])}[spec]
    elif isinstance(spec, dict) and len(spec) == 1 and next(iter(spec)) in ("x", "y"):
        key, val = next(iter(spec.items()))
        axis = 0 if key == "x" else 1
        val = float(val)
    else:
        raise ConfigError(f"{where}: cannot interpret region {spec!r}")
    return lambda p, a=axis, v=val: np.abs(np.asarray(p)[:, a] - v) <= tol


def _components(spec, where: str) -> tuple:
    if spec is None:
        return (0, 1)
    names = {"u": (0,), "v": (1,), "uv": (0, 1), "x": (0,), "y": (1,)}
    if isinstance(spec, str):
        if spec not in names:
            raise ConfigError(f"{where}: components must be 'u', 'v', 'uv' or a list of 0/1")
        return names[spec]
    comps = tuple(int(c) for c in spec)
    if not comps or any(c not in (0, 1) for c in comps):
        raise ConfigError(f"{where}: components must be a non-empty list of 0/1")
    return comps


def _vector(spec, where: str):
    if isinstance(spec, str):
        ref = get_problem(spec) if spec in ("1a", "1b", "2a", "2b") else None
        if ref is None or ref.exact_displacement is None:
            raise ConfigError(f"{where}: unknown solution tag {spec!r}")
        return ref.exact_displacement
    try:
        vec = [float(x) for x in spec]
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected two numbers or a catalog tag, got {spec!r}") from None
    if len(vec) != 2:
        raise ConfigError(f"{where}: expected two numbers, got {len(vec)}")
    return tuple(vec)


def _traction(spec, where: str):
    if isinstance(spec, dict):
        if set(spec) == {"shear"}:
            t = float(spec["shear"])
            return lambda pts, n: np.tile([t * n[1], t * n[0]], (len(pts), 1))
        if set(spec) == {"pressure"}:
            pr = float(spec["pressure"])
            return lambda pts, n: np.tile([-pr * n[0], -pr * n[1]], (len(pts), 1))
        raise ConfigError(f"{where}: traction object must be {{\"shear\": t}} or {{\"pressure\": p}}")
    vec = _vector(spec, where)
    if callable(vec):
        raise ConfigError(f"{where}: traction cannot be a displacement tag")
    return vec


def material_from_config(spec) -> Material:
    if not isinstance(spec, dict):
        raise ConfigError("'material' must be an object with {E, nu} or {lambda, mu}")
    keys = set(spec)
    if keys == {"E", "nu"}:
        return Material.plane_strain(float(spec["E"]), float(spec["nu"]))
    if keys == {"lambda", "mu"}:
        return Material.from_lame(float(spec["lambda"]), float(spec["mu"]))
    raise ConfigError(f"'material' needs exactly {{E, nu}} or {{lambda, mu}}, got {sorted(keys)}")


@dataclass
class ProblemConfig:
    k: int
    tau: float
    problem: ProblemSpec


def problem_from_config(cfg: dict, mesh: Mesh) -> ProblemConfig:
    """Build a problem from a parsed JSON configuration.

    Keys: ``k``, ``tau`` (default 0.5), ``material``, ``body_load`` (two
    numbers or the tag of a catalog problem), ``dirichlet``, ``neumann``,
    ``points`` and ``exact`` (catalog tag whose exact solution is used for
    error norms).
    """
    if not isinstance(cfg, dict):
        raise ConfigError("problem configuration must be a JSON object")
    known = {"k", "tau", "material", "body_load", "dirichlet", "neumann", "points", "exact"}
    extra = set(cfg) - known
    if extra:
        raise ConfigError(f"unknown configuration keys {sorted(extra)}; allowed: {sorted(known)}")
    if "material" not in cfg:
        raise ConfigError("configuration needs a 'material' entry")
    try:
        k = int(cfg.get("k", 1))
        tau = float(cfg.get("tau", DEFAULT_TAU))
    except (TypeError, ValueError):
        raise ConfigError("'k' must be an integer and 'tau' a number") from None
    if k < 1:
        raise ConfigError(f"'k' must be >= 1, got {k}")
    if not tau > 0:
        raise ConfigError(f"'tau' must be positive, got {tau}")
    material = material_from_config(cfg["material"])

    body = cfg.get("body_load")
    if body is None:
        load = None
    elif isinstance(body, str):
        try:
            load = get_problem(body).body_load
        except ValueError as exc:
            raise ConfigError(f"body_load: {exc}") from None
    else:
        vec = _vector(body, "body_load")
        load = None if vec == (0.0, 0.0) else np.asarray(vec)

    bcs = BoundaryConditions()
    for i, d in enumerate(cfg.get("dirichlet", [])):
        where = f"dirichlet[{i}]"
        bcs.dirichlet.append(DirichletBC(_region(d.get("on", "all"), mesh, where),
                                         _vector(d.get("value", [0, 0]), where),
                                         _components(d.get("components"), where)))
    for i, d in enumerate(cfg.get("neumann", [])):
        where = f"neumann[{i}]"
        if "traction" not in d:
            raise ConfigError(f"{where}: missing 'traction'")
        bcs.neumann.append(NeumannBC(_region(d.get("on", "all"), mesh, where),
                                     _traction(d["traction"], where)))
    for i, d in enumerate(cfg.get("points", [])):
        where = f"points[{i}]"
        if "at" not in d:
            raise ConfigError(f"{where}: missing 'at'")
        val = _vector(d.get("value", [0, 0]), where)
        if callable(val):
            val = tuple(val(np.asarray([d["at"]], dtype=float))[0])
        bcs.points.append(PointConstraint(tuple(float(x) for x in d["at"]), val,
                                          _components(d.get("components"), where)))

    exact_u = exact_g = None
    if cfg.get("exact") is not None:
        try:
            ref = get_problem(cfg["exact"])
        except ValueError as exc:
            raise ConfigError(f"exact: {exc}") from None
        exact_u, exact_g = ref.exact_displacement, ref.exact_gradient
    spec = ProblemSpec("config", material, bcs, load, exact_u, exact_g)
    return ProblemConfig(k, tau, spec)


def load_problem_config(path, mesh: Mesh) -> ProblemConfig:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"problem file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}") from None
    return problem_from_config(cfg, mesh)


def solve_config(mesh: Mesh, config: ProblemConfig) -> tuple:
    """Solve a configured problem; returns (solution, D1 or None, D2 or None)."""
    p = config.problem
    sol = solve_problem(mesh, config.k, p.material, p.bcs, p.body_load, config.tau,
                        refine_steps=default_refine_steps(config.k))
    if p.has_exact:
        return sol, error_D1(sol, p.exact_strain), error_D2(sol, p.exact_displacement,
                                                            p.exact_gradient)
    return sol, None, None


def finite_or_none(x) -> Optional[float]:
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x
