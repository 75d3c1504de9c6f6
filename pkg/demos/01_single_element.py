"""
One virtual element, inside and out
===================================

A virtual element never evaluates its shape functions. Everything it needs
comes from boundary values and a few interior moments. This script builds
one element on a concave pentagon and looks at the pieces.
"""
import numpy as np

from polyvem.element import Material, build_element, dof_layout
from polyvem.mesh import build_geometry

np.set_printoptions(precision=4, suppress=True, linewidth=110)

# %%
# Geometry
# --------
# Vertices go counter-clockwise. The vertex at (1.0, 0.6) is reflex, so this
# cell could not be handled by a standard finite element.

pentagon = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 0.6], [1.6, 1.5], [0.0, 1.2]])
geom = build_geometry(pentagon)
print(f"area {geom.area:.4f}, centroid {geom.centroid}, diameter {geom.diameter:.4f}")

# %%
# Degrees of freedom
# ------------------
# For degree k each component has one value per vertex, k - 1 Gauss-Lobatto
# values per edge and k(k - 1)/2 interior moments.

for k in (1, 2, 3):
    lay = dof_layout(k, geom.n_edges)
    print(f"k={k}: {lay.n} dofs, {lay.r} moment(s) per component, strain space dim {lay.ell}")

# %%
# Stiffness
# ---------
# The stiffness splits into a consistency part, exact for polynomial
# displacements, and a stabilization part that vanishes on them.

steel = Material.plane_strain(E=7000.0, nu=0.3)
el = build_element(geom, 2, steel.C, tau=0.5)
K = el.K
print("symmetric:", np.allclose(K, K.T))
eig = np.linalg.eigvalsh(K)
print("four smallest eigenvalues / trace:", eig[:4] / np.trace(K))

# %%
# The columns of D are the dofs of the polynomial displacements. K_S kills
# them all, so a polynomial field only feels the consistency term.

print("max |K_S D| / tr(K):", np.abs(el.Ks @ el.D).max() / np.trace(K))

# %%
# The projector maps dofs to strain coefficients. For a linear displacement
# u = (x, 0) the strain is (1, 0, 0) everywhere: only the constant
# coefficients are nonzero.

x_field = el.D[:, 2 * 1]            # monomial xi in the u component
strain = el.Pi @ x_field * geom.diameter
print("strain coefficients of u = (x, 0):", strain)
