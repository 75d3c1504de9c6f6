"""
Meshes and problems from files
==============================

Everything the command line can do is available from files: a JSON mesh
and a JSON problem description. This script writes both, solves, and
prints the equivalent shell command.
"""
import json
from pathlib import Path

import numpy as np

from polyvem.benchmarks import load_problem_config, solve_config
from polyvem.mesh import Mesh, load_mesh, save_mesh

out = Path("out_demo")
out.mkdir(exist_ok=True)

# %%
# A hand-made mesh
# ----------------
# Two cells: a concave quadrilateral and the pentagon that fills the rest of
# the 2 x 1 rectangle. Vertices are shared by index.

vertices = np.array([[0, 0], [1, 0], [2, 0], [2, 1], [1, 1], [0, 1], [0.7, 0.5]])
cells = [[0, 1, 6, 5], [1, 2, 3, 4, 5, 6]]
save_mesh(Mesh(vertices, cells), out / "two_cells.json")
mesh = load_mesh(out / "two_cells.json")
print(f"{mesh.n_cells} cells, {mesh.n_edges} edges, area {mesh.total_area}")

# %%
# A problem
# ---------
# Uniaxial tension: rollers on the left, a pin at the origin and a traction
# on the right. The exact solution is linear, so the error norms are zero
# up to roundoff.

problem = {
    "k": 3,
    "material": {"E": 7000.0, "nu": 0.3},
    "dirichlet": [{"on": "left", "components": "u"}],
    "neumann": [{"on": "right", "traction": [2000.0, 0.0]}],
    "points": [{"at": [0.0, 0.0], "components": "v"}],
    "exact": "1a",
}
(out / "tension.json").write_text(json.dumps(problem, indent=2))

config = load_problem_config(out / "tension.json", mesh)
sol, d1, d2 = solve_config(mesh, config)
print(f"{sol.n_dofs} dofs, D1 = {d1:.1e}, D2 = {d2:.1e}")
print("tip displacement:", sol.vertex_displacements()[3])

# %%
# The same run from the shell:

print(f"vem solve --mesh {out / 'two_cells.json'} --problem {out / 'tension.json'} --out {out}")
