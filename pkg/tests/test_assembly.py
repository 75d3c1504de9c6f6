import numpy as np
import pytest
import scipy.sparse as sp

from oracles import PolyField
from polyvem.assembly import (BoundaryConditions, DirichletBC, NeumannBC, PointConstraint,
                              SolverError, apply_dirichlet, assemble, dirichlet_values,
                              edge_point_nodes, interpolate, number_dofs, solve, solve_problem)
from polyvem.element import Material, build_element
from polyvem.mesh import Mesh
from polyvem.meshgen import generate, patch_mesh_1b, unit_square_quads, voronoi
from polyvem.polybasis import gauss_lobatto
from polyvem.problems import cubic_harmonic, patch_tension

STEEL = Material.plane_strain(7000.0, 0.3)
TWO_QUADS = Mesh([[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1]], [[0, 1, 4, 3], [1, 2, 5, 4]])
PENTAGON = Mesh([[0.0, 0.0], [1.0, 0.0], [1.3, 0.8], [0.5, 1.4], [-0.3, 0.8]], [[0, 1, 2, 3, 4]])
EVERYWHERE = lambda p: np.ones(len(p), dtype=bool)


class TestNumbering:
    def test_two_quads_k1(self):
        assert number_dofs(TWO_QUADS, 1).n_dofs == 12

    def test_two_quads_k2(self):
        assert number_dofs(TWO_QUADS, 2).n_dofs == 6 * 2 + 7 * 2 + 2 * 2

    def test_single_pentagon_k3(self):
        dm = number_dofs(PENTAGON, 3)
        assert dm.n_dofs == 36
        np.testing.assert_array_equal(np.sort(dm.cell_dofs[0]), np.arange(36))

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_every_dof_used_once_per_cell(self, k):
        mesh = voronoi(12, 5, seed=3)
        dm = number_dofs(mesh, k)
        seen = np.zeros(dm.n_dofs, dtype=bool)
        for dofs in dm.cell_dofs:
            assert len(set(dofs.tolist())) == len(dofs)
            seen[dofs] = True
        assert seen.all()

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_shared_edge_nodes_agree(self, k):
        # both neighbours see the same physical point behind each shared global node
        mesh = voronoi(10, 5, seed=1)
        dm = number_dofs(mesh, k)
        s = 0.5 * (gauss_lobatto(k + 1).nodes[1:-1] + 1.0)
        for c, ids in enumerate(mesh.cells):
            m = len(ids)
            nodes = dm.cell_dofs[c][0::2] // 2
            for e in range(m):
                a, b = mesh.vertices[ids[e]], mesh.vertices[ids[(e + 1) % m]]
                local = nodes[m + e * (k - 1): m + (e + 1) * (k - 1)]
                expect = a + s[:, None] * (b - a)
                np.testing.assert_allclose(dm.node_points[local], expect, atol=1e-14)

    def test_edge_nodes_run_low_to_high(self):
        dm = number_dofs(TWO_QUADS, 3)
        nodes = edge_point_nodes(TWO_QUADS, dm, 4, 1)
        assert nodes[0] == dm.vertex_node[4] and nodes[-1] == dm.vertex_node[1]
        np.testing.assert_array_equal(nodes[1:-1], dm.edge_nodes[TWO_QUADS.edge_id(1, 4)][::-1])


class TestAssembly:
    def test_single_element_matches_element_matrix(self):
        sysm = assemble(PENTAGON, 2, STEEL)
        el = build_element(PENTAGON.geometries[0], 2, STEEL.C)
        np.testing.assert_allclose(sysm.K.toarray(), el.K, rtol=1e-15, atol=0)

    def test_symmetric(self):
        K = assemble(voronoi(9, 3, seed=2), 3, STEEL).K
        assert abs(K - K.T).max() <= 1e-13 * abs(K).max()

    def test_global_energy_is_sum_of_element_energies(self, rng):
        sysm = assemble(TWO_QUADS, 2, STEEL)
        v = rng.standard_normal(sysm.dofmap.n_dofs)
        total = sum(v[d] @ el.K @ v[d] for d, el in zip(sysm.dofmap.cell_dofs, sysm.elements))
        assert v @ sysm.K @ v == pytest.approx(total, rel=1e-13)

    def test_linearity_in_C(self):
        mesh = generate("concave", 3)
        a = assemble(mesh, 2, STEEL)
        b = assemble(mesh, 2, STEEL.scaled(4.0))
        assert abs(b.K - 4.0 * a.K).max() == 0.0

    def test_linearity_in_load(self):
        mesh = generate("hexagons", 3)
        load = lambda p: np.column_stack([np.sin(p[:, 0]), p[:, 1] ** 2])
        a = assemble(mesh, 3, STEEL, body_load=load)
        b = assemble(mesh, 3, STEEL, body_load=lambda p: 8.0 * load(p))
        np.testing.assert_array_equal(b.rhs, 8.0 * a.rhs)

    @pytest.mark.parametrize("family, k", [("squares", 1), ("concave", 2), ("voronoi", 3),
                                           ("triangles", 2)])
    def test_free_free_kernel_is_rigid(self, family, k):
        K = assemble(generate(family, 2), k, STEEL).K.toarray()
        lam = np.linalg.eigvalsh(K)
        assert np.sum(np.abs(lam) < 1e-10 * np.trace(K)) == 3

    def test_shape_cache_gives_identical_matrix(self):
        mesh = unit_square_quads(4)
        a = assemble(mesh, 3, STEEL, reuse_shapes=True)
        b = assemble(mesh, 3, STEEL, reuse_shapes=False)
        assert abs(a.K - b.K).max() <= 1e-12 * abs(a.K).max()

    def test_polynomial_interpolant_is_single_valued(self, rng):
        # every cell's local dofs of a global cubic equal D p for that cell
        mesh = voronoi(8, 5, seed=4)
        k = 3
        field = PolyField.random(rng, k)
        dm = number_dofs(mesh, k)
        u = interpolate(mesh, dm, field)
        sysm = assemble(mesh, k, STEEL, dofmap=dm)
        for c, el in enumerate(sysm.elements):
            local = u[dm.cell_dofs[c]]
            coef = np.linalg.lstsq(el.D, local, rcond=None)[0]
            assert np.abs(el.D @ coef - local).max() <= 1e-11 * np.abs(local).max()


class TestBoundaryConditions:
    def test_homogeneous(self):
        dm = number_dofs(TWO_QUADS, 1)
        fixed = dirichlet_values(TWO_QUADS, dm, BoundaryConditions([DirichletBC(EVERYWHERE)]))
        assert len(fixed) == 12 and not any(fixed.values())

    def test_midpoint_value(self):
        g = lambda p: np.column_stack([p[:, 0] ** 2, p[:, 1] ** 3])
        dm = number_dofs(TWO_QUADS, 2)
        fixed = dirichlet_values(TWO_QUADS, dm, BoundaryConditions([DirichletBC(EVERYWHERE, g)]))
        node = dm.edge_nodes[TWO_QUADS.edge_id(0, 1)][0]
        assert fixed[2 * node] == pytest.approx(0.25, rel=1e-15)
        assert fixed[2 * node + 1] == pytest.approx(0.0, abs=1e-300)

    def test_moments_never_constrained(self):
        dm = number_dofs(TWO_QUADS, 3)
        fixed = dirichlet_values(TWO_QUADS, dm, BoundaryConditions([DirichletBC(EVERYWHERE)]))
        moment_dofs = set((2 * dm.moment_nodes.ravel()).tolist()) | set(
            (2 * dm.moment_nodes.ravel() + 1).tolist())
        assert not moment_dofs & set(fixed)

    def test_component_selection(self):
        dm = number_dofs(TWO_QUADS, 1)
        left = lambda p: np.abs(p[:, 0]) < 1e-12
        fixed = dirichlet_values(TWO_QUADS, dm, BoundaryConditions([DirichletBC(left, components=(0,))]))
        assert sorted(fixed) == [2 * dm.vertex_node[0], 2 * dm.vertex_node[3]]

    def test_point_constraint_needs_a_vertex(self):
        dm = number_dofs(TWO_QUADS, 1)
        with pytest.raises(ValueError, match="no mesh vertex"):
            dirichlet_values(TWO_QUADS, dm, BoundaryConditions(points=[PointConstraint((0.5, 0.5))]))

    def test_elimination_is_symmetric(self):
        sysm = assemble(generate("concave", 3), 2, STEEL)
        cs = apply_dirichlet(sysm, BoundaryConditions([DirichletBC(EVERYWHERE, (0.1, -0.2))]))
        assert abs(cs.K - cs.K.T).max() <= 1e-13 * abs(cs.K).max()
        assert len(cs.free) + len(cs.fixed) == sysm.dofmap.n_dofs

    def test_neumann_resultant(self):
        bcs = BoundaryConditions(neumann=[NeumannBC(lambda p: np.abs(p[:, 0] - 2) < 1e-12, (3.0, -1.0))])
        for k in (1, 2, 3):
            f = assemble(TWO_QUADS, k, STEEL, bcs=bcs).rhs
            assert f[0::2].sum() == pytest.approx(3.0, rel=1e-14)
            assert f[1::2].sum() == pytest.approx(-1.0, rel=1e-14)


class TestSolve:
    def test_zero_data_zero_solution(self):
        bcs = BoundaryConditions([DirichletBC(EVERYWHERE)])
        sol = solve_problem(generate("hexagons", 3), 2, STEEL, bcs)
        assert not sol.u.any()

    def test_single_square_uniaxial_tension(self):
        # 1 x 1 mesh, k = 1: eps_xx = q (1 - nu^2) / E in plane strain
        prob = patch_tension()
        sol = solve_problem(unit_square_quads(1), 1, prob.material, prob.bcs)
        disp = sol.vertex_displacements()
        exx = 2000.0 * (1 - 0.3 ** 2) / 7000.0
        eyy = -2000.0 * 0.3 * 1.3 / 7000.0
        np.testing.assert_allclose(disp[:, 0], exx * sol.mesh.vertices[:, 0], atol=1e-15)
        np.testing.assert_allclose(disp[:, 1], eyy * sol.mesh.vertices[:, 1], atol=1e-15)

    def test_recovers_known_vector(self, rng):
        sysm = assemble(generate("triangles", 4), 2, STEEL)
        cs = apply_dirichlet(sysm, BoundaryConditions([DirichletBC(EVERYWHERE)]))
        w = rng.standard_normal(len(cs.free))
        cs.rhs = cs.K @ w
        u, info = solve(cs)
        np.testing.assert_allclose(u[cs.free], w, rtol=1e-10, atol=1e-10 * np.abs(w).max())
        assert info.residual < 1e-12

    def test_cg_agrees_with_direct(self):
        prob = cubic_harmonic()
        mesh = generate("squares", 8)
        a = solve_problem(mesh, 2, prob.material, prob.bcs)
        b = solve_problem(mesh, 2, prob.material, prob.bcs, method="cg")
        assert np.linalg.norm(a.u - b.u) <= 1e-8 * np.linalg.norm(a.u)
        assert b.info.iterations > 0

    def test_missing_dirichlet_is_singular(self):
        with pytest.raises(SolverError, match="singular|factorization"):
            solve_problem(TWO_QUADS, 1, STEEL, BoundaryConditions())

    def test_unknown_method(self):
        sysm = assemble(TWO_QUADS, 1, STEEL)
        cs = apply_dirichlet(sysm, BoundaryConditions([DirichletBC(EVERYWHERE)]))
        with pytest.raises(ValueError, match="unknown solver"):
            solve(cs, method="qr")

    def test_refinement_needs_direct_solver(self):
        sysm = assemble(TWO_QUADS, 1, STEEL)
        bcs = BoundaryConditions([DirichletBC(lambda p: p[:, 0] < 1e-12)])
        cs = apply_dirichlet(sysm, bcs)
        with pytest.raises(ValueError, match="refinement"):
            solve(cs, method="cg", system=sysm, refine_steps=1)

    def test_fully_constrained(self):
        sysm = assemble(TWO_QUADS, 1, STEEL)
        cs = apply_dirichlet(sysm, BoundaryConditions([DirichletBC(EVERYWHERE, (1.0, 2.0))]))
        u, _ = solve(cs)
        np.testing.assert_array_equal(u.reshape(-1, 2), np.tile([1.0, 2.0], (6, 1)))

    def test_deterministic(self):
        prob = cubic_harmonic()
        mesh = generate("voronoi", 4)
        a = solve_problem(mesh, 3, prob.material, prob.bcs, refine_steps=1)
        b = solve_problem(mesh, 3, prob.material, prob.bcs, refine_steps=1)
        np.testing.assert_array_equal(a.u, b.u)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_polynomial_solution_reproduced(self, k, rng):
        mesh = patch_mesh_1b()
        field = PolyField.random(rng, k)
        bcs = BoundaryConditions([DirichletBC(EVERYWHERE, field)])
        sol = solve_problem(mesh, k, STEEL, bcs, body_load=field.body_load_function(STEEL.C),
                            refine_steps=2)
        ref = interpolate(mesh, sol.dofmap, field)
        assert np.abs(sol.u - ref).max() <= 1e-8 * np.abs(ref).max()


def test_csr_output():
    assert sp.isspmatrix_csr(assemble(TWO_QUADS, 1, STEEL).K)
