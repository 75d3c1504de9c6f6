"""
Cook's membrane
===============

A tapered cantilever is clamped on the left and sheared on the right. There
is no closed-form answer, so we refine, extrapolate, and compare two very
different mesh families.
"""
from pathlib import Path

from polyvem.assembly import solve_problem
from polyvem.benchmarks import run_cook, tip_displacement
from polyvem.meshgen import cook_voronoi
from polyvem.postproc import export_vtk
from polyvem.problems import cook_membrane

# %%
# Quadrilaterals, k = 2
# ---------------------
# The vertical tip displacement grows toward its limit as the mesh is
# refined. Aitken extrapolation of the last three values estimates it.

quads = run_cook("quads", k=2, levels=4, base=4)
for r in quads.levels:
    print(f"{r.n:3d} x {r.n:<3d} quads: vA = {r.vA:.4f}")
print(f"monotone: {quads.monotone}, extrapolated limit {quads.limit:.4f}")

# %%
# Centroidal Voronoi cells
# ------------------------
# The same problem on polygons with five to eight sides.

vor = run_cook("voronoi", k=2, levels=4, base=4)
print("Voronoi:", ", ".join(f"{v:.4f}" for v in vor.values), f"-> {vor.limit:.4f}")
print(f"relative difference of the limits: {abs(vor.limit - quads.limit) / quads.limit:.3%}")

# %%
# Writing a solution for ParaView
# -------------------------------
# Point data holds vertex displacements and cell data the average stress.

problem = cook_membrane()
mesh = cook_voronoi(100)
sol = solve_problem(mesh, 2, problem.material, problem.bcs)
out = Path("out_demo")
out.mkdir(exist_ok=True)
export_vtk(mesh, sol, out / "cook_voronoi.vtk")
vA, dist = tip_displacement(sol)
print(f"vA on 100 Voronoi cells: {vA:.4f}; written to {out / 'cook_voronoi.vtk'}")
