"""Arbitrary-order virtual elements for 2D linear elasticity on polygonal meshes."""
from .assembly import (BoundaryConditions, DirichletBC, NeumannBC, PointConstraint, Solution,
                       SolverError, assemble, apply_dirichlet, interpolate, number_dofs, solve,
                       solve_problem)
from .element import ElementError, ElementMatrices, Material, build_element, dof_layout
from .mesh import ElementGeometry, Mesh, MeshError, build_geometry, load_mesh, save_mesh
from .postproc import error_D1, error_D2, export_csv, export_vtk, sample_stress

__version__ = "0.1.0"

__all__ = [
    "BoundaryConditions", "DirichletBC", "NeumannBC", "PointConstraint", "Solution",
    "SolverError", "assemble", "apply_dirichlet", "interpolate", "number_dofs", "solve",
    "solve_problem", "ElementError", "ElementMatrices", "Material", "build_element",
    "dof_layout", "ElementGeometry", "Mesh", "MeshError", "build_geometry", "load_mesh",
    "save_mesh", "error_D1", "error_D2", "export_csv", "export_vtk", "sample_stress",
]
