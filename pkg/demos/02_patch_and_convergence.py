"""
Patch tests and convergence
===========================

Two checks give confidence in any discretization. A constant-stress patch
test must be reproduced to roundoff. Smooth problems must converge at the
expected rate as the mesh is refined.
"""
from polyvem.benchmarks import run_convergence, run_patch
from polyvem.meshgen import patch_mesh_1b

# %%
# Patch test
# ----------
# The shear patch uses a star-shaped octagon surrounded by four concave
# pentagons. The recovered stress is compared with the exact value on a
# 100 x 100 grid of points.

mesh = patch_mesh_1b()
print(f"patch mesh: {mesh.n_cells} cells, {mesh.n_vertices} vertices")
for k in (1, 2, 3):
    res = run_patch("1b", k)
    print(f"  k={k}: max relative stress deviation {res.max_deviation:.1e}")

# %%
# Convergence on Voronoi cells
# ----------------------------
# The sine-product problem has a smooth exact solution and a body load. The
# energy-type error D1 should fall like h^k.

for k in (1, 2):
    res = run_convergence("2b", "voronoi", k, levels=3, base=6)
    print(f"k={k}")
    for r in res.levels:
        print(f"  h={r.h:.4f}  dofs={r.ndofs:6d}  D1={r.D1:.3e}  D2={r.D2:.3e}")
    print(f"  fitted slopes: D1 {res.slope_D1:.2f}, D2 {res.slope_D2:.2f}")

# %%
# At k = 3 the cubic problem lies inside the discrete space, so the error
# stays at roundoff on every mesh.

res = run_convergence("2a", "concave", 3, levels=2, base=4)
print("cubic solution, k=3:", [f"{r.D1:.1e}" for r in res.levels])
