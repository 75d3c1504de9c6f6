import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from element_oracles import analytic_energy_matrix, exact_strain_coefficients, rigid_modes
from oracles import (fine_polygon_rule, green_moment, random_convex_polygon, random_polygon,
                     random_star_polygon)
from polyvem.element import (DofLayout, ElementError, Material, StabilizationConfig,
                             build_element, dof_layout, load_general, load_k1, matrix_B,
                             matrix_D, matrix_G, middle_matrix, neumann_edge, projector,
                             stiffness_consistent, stiffness_stabilization)
from polyvem.mesh import build_geometry
from polyvem.meshgen import uniform_hexagons
from polyvem.polybasis import (divergence_decomposition, eval_strain_basis, monomial_index,
                               monomial_ordering)
from polyvem.problems import sine_product

UNIT = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
PENTAGON = np.array([[0.0, 0.0], [1.0, 0.0], [1.3, 0.8], [0.5, 1.4], [-0.3, 0.8]])
STEEL = Material.plane_strain(7000.0, 0.3)


# --- layout -----------------------------------------------------------------

class TestDofLayout:
    @pytest.mark.parametrize("k, m, n, r, ell", [
        (1, 4, 8, 0, 3),
        (2, 5, 22, 1, 9),
        (3, 5, 36, 3, 18),
        (4, 3, 36, 6, 30),
    ])
    def test_counts(self, k, m, n, r, ell):
        lay = dof_layout(k, m)
        assert (lay.n, lay.r, lay.ell) == (n, r, ell)
        assert 2 * m + 2 * m * (k - 1) + k * (k - 1) == n

    def test_index_map(self):
        lay = dof_layout(3, 4)
        assert lay.vertex(0) == (0, 1)
        assert lay.edge_node(0, 0) == (8, 9)
        assert lay.edge_node(3, 1) == (22, 23)
        assert lay.moment(0) == (24, 25)
        assert lay.moment(2)[1] == lay.n - 1

    @pytest.mark.parametrize("k, m", [(0, 4), (1, 2)])
    def test_invalid(self, k, m):
        with pytest.raises(ValueError):
            DofLayout(k, m)


class TestMaterial:
    def test_plane_strain_entries(self):
        E, nu = 7000.0, 0.3
        lam = E * nu / ((1 + nu) * (1 - 2 * nu))
        mu = E / (2 * (1 + nu))
        np.testing.assert_allclose(STEEL.C, [[lam + 2 * mu, lam, 0], [lam, lam + 2 * mu, 0],
                                             [0, 0, mu]], rtol=1e-15)

    @pytest.mark.parametrize("C", [np.eye(2), [[1, 2, 0], [0, 1, 0], [0, 0, 1]], -np.eye(3)])
    def test_rejects_bad_matrices(self, C):
        with pytest.raises(ValueError):
            Material(np.asarray(C, dtype=float))

    def test_tau_must_be_positive(self):
        with pytest.raises(ValueError):
            StabilizationConfig(0.0)


# --- matrices ---------------------------------------------------------------

class TestMatrixD:
    def test_k1_quad_explicit(self):
        g = build_geometry(UNIT)
        D = matrix_D(1, g, dof_layout(1, 4))
        xi, eta = g.scaled(UNIT).T
        for i in range(4):
            np.testing.assert_allclose(D[2 * i], [1, 0, xi[i], 0, eta[i], 0], rtol=1e-15)
            np.testing.assert_allclose(D[2 * i + 1], [0, 1, 0, xi[i], 0, eta[i]], rtol=1e-15)

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_constant_columns(self, k):
        g = build_geometry(PENTAGON)
        lay = dof_layout(k, 5)
        D = matrix_D(k, g, lay)
        assert D.shape == (lay.n, (k + 1) * (k + 2))
        # point rows and the q_1 moment pair reproduce the constants exactly
        rows = 2 * lay.n_boundary_nodes + (2 if k > 1 else 0)
        u = np.tile([1.0, 0.0], rows // 2)
        np.testing.assert_allclose(D[:rows, 0], u, atol=1e-15)
        np.testing.assert_allclose(D[:rows, 1], 1 - u, atol=1e-15)

    def test_k2_moment_row(self):
        g = build_geometry(UNIT)
        D = matrix_D(2, g, dof_layout(2, 4))
        ref = green_moment(UNIT, 2, 0, g.centroid, g.diameter) / g.area
        assert D[-2, 2 * monomial_index(2, 0)] == pytest.approx(ref, rel=1e-13)
        assert D[-1, 2 * monomial_index(2, 0) + 1] == pytest.approx(ref, rel=1e-13)
        assert D[-2, 2 * monomial_index(2, 0) + 1] == 0.0


class TestMatrixG:
    def test_k1_is_area_identity(self, rng):
        g = build_geometry(random_star_polygon(rng))
        np.testing.assert_allclose(matrix_G(1, g), g.area * np.eye(3), rtol=1e-14)

    def test_k2_decoupled_constants(self):
        g = build_geometry(PENTAGON)
        G = matrix_G(2, g)
        assert np.abs(G[:3, 3:]).max() <= 1e-13 * g.area
        for a in range(3):
            for b in range(3):
                if a % 3 != b % 3:
                    assert G[a, b] == 0.0

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_matches_direct_quadrature(self, k, rng):
        pts = random_polygon(rng)
        g = build_geometry(pts)
        qp, qw = fine_polygon_rule(pts, 12)
        s = g.scaled(qp)
        ref = sum(w * eval_strain_basis(k, x, y).T @ eval_strain_basis(k, x, y)
                  for (x, y), w in zip(s, qw))
        np.testing.assert_allclose(matrix_G(k, g), ref, atol=1e-13 * g.area)


class TestMatrixB:
    def test_k1_unit_square_row(self):
        g = build_geometry(UNIT)
        B = matrix_B(1, g, dof_layout(1, 4))
        np.testing.assert_allclose(B[0, 0::2], [-0.5, 0.5, 0.5, -0.5], atol=1e-15)
        np.testing.assert_allclose(B[0, 1::2], 0.0, atol=1e-15)

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_translations_in_kernel(self, k, rng):
        pts = random_polygon(rng)
        g = build_geometry(pts)
        lay = dof_layout(k, len(pts))
        B = matrix_B(k, g, lay)
        D = matrix_D(k, g, lay)
        scale = np.abs(B).max()
        assert np.abs(B @ D[:, :2]).max() <= 1e-13 * scale

    def test_k2_moment_columns_interior_only(self):
        g = build_geometry(PENTAGON)
        lay = dof_layout(2, 5)
        B = matrix_B(2, g, lay)
        M1 = divergence_decomposition(2).scaled(g.diameter)[0]
        iu, iv = lay.moment(0)
        np.testing.assert_allclose(B[:, iu], -g.area * M1[0], rtol=1e-15)
        np.testing.assert_allclose(B[:, iv], -g.area * M1[1], rtol=1e-15)


class TestProjector:
    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_polynomial_consistency(self, k, rng):
        pts = random_star_polygon(rng)
        g = build_geometry(pts)
        lay = dof_layout(k, len(pts))
        Pi = projector(matrix_G(k, g), matrix_B(k, g, lay))
        D = matrix_D(k, g, lay)
        exact = exact_strain_coefficients(k, g.diameter)
        assert np.abs(Pi @ D - exact).max() <= 1e-10 * np.abs(exact).max()

    def test_k1_uniaxial(self):
        g = build_geometry(UNIT)
        Pi = projector(matrix_G(1, g), matrix_B(1, g, dof_layout(1, 4)))
        u = np.zeros(8)
        u[0::2] = UNIT[:, 0]
        np.testing.assert_allclose(Pi @ u, [1.0, 0.0, 0.0], atol=1e-15)

    def test_translation_gives_zero_strain(self):
        g = build_geometry(PENTAGON)
        lay = dof_layout(3, 5)
        Pi = projector(matrix_G(3, g), matrix_B(3, g, lay))
        D = matrix_D(3, g, lay)
        assert np.abs(Pi @ D[:, :2]).max() <= 1e-13 * np.abs(Pi).max()

    def test_indefinite_gram_reported(self):
        with pytest.raises(ElementError, match="element 7"):
            projector(-np.eye(3), np.ones((3, 2)), element=7)


class TestStiffness:
    def test_k1_consistency_formula(self):
        g = build_geometry(PENTAGON)
        lay = dof_layout(1, 5)
        B = matrix_B(1, g, lay)
        Pi = projector(matrix_G(1, g), B)
        Kc = stiffness_consistent(Pi, middle_matrix(1, g, STEEL.C))
        np.testing.assert_allclose(Kc, B.T @ STEEL.C @ B / g.area, rtol=1e-12,
                                   atol=1e-13 * np.abs(Kc).max())

    def test_unit_square_against_dense_quadrature(self):
        g = build_geometry(UNIT)
        el = build_element(g, 1, STEEL.C)
        qp, qw = fine_polygon_rule(UNIT, 6)
        ref = np.zeros((8, 8))
        for w in qw:
            # k = 1: projected strain is constant, N^P = I
            ref += w * el.Pi.T @ STEEL.C @ el.Pi
        np.testing.assert_allclose(el.Kc, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_stabilization_annihilates_polynomials(self, k, rng):
        pts = random_polygon(rng)
        el = build_element(build_geometry(pts), k, STEEL.C)
        assert np.abs(el.Ks @ el.D).max() <= 1e-12 * np.trace(el.Kc)
        assert np.abs(el.Kc @ el.D[:, :2]).max() <= 1e-12 * np.trace(el.Kc)

    def test_stabilization_scales_with_C(self):
        g = build_geometry(PENTAGON)
        a = build_element(g, 2, STEEL.C)
        b = build_element(g, 2, 2.0 * STEEL.C)
        np.testing.assert_allclose(b.Ks, 2.0 * a.Ks, rtol=1e-14, atol=1e-14 * np.abs(a.Ks).max())

    def test_tau_scales_stabilization(self):
        g = build_geometry(PENTAGON)
        a = build_element(g, 2, STEEL.C, tau=0.5)
        b = build_element(g, 2, STEEL.C, tau=5.0)
        np.testing.assert_array_equal(a.Kc, b.Kc)
        np.testing.assert_allclose(b.Ks, 10.0 * a.Ks, rtol=1e-14, atol=1e-14 * np.abs(b.Ks).max())

    def test_tau_zero_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            build_element(build_geometry(UNIT), 1, STEEL.C, tau=0.0)

    def test_rank_deficient_D(self):
        D = np.ones((6, 2))
        with pytest.raises(ElementError, match="rank deficient"):
            stiffness_stabilization(np.eye(6), D, 0.5, element=3)

    def test_variable_C_matches_constant_path(self):
        g = build_geometry(PENTAGON)
        const = middle_matrix(3, g, STEEL.C)
        field = middle_matrix(3, g, lambda p: np.broadcast_to(STEEL.C, (len(p), 3, 3)))
        np.testing.assert_allclose(field, const, rtol=1e-12, atol=1e-12 * np.abs(const).max())

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3))
    def test_element_properties(self, seed, k):
        r = np.random.default_rng(seed)
        pts = random_polygon(r)
        g = build_geometry(pts)
        el = build_element(g, k, STEEL.C)
        K = el.K
        tr = np.trace(K)
        assert np.abs(K - K.T).max() < 1e-13 * tr
        lam = np.linalg.eigvalsh(K)
        assert np.sum(np.abs(lam) < 1e-10 * tr) == 3
        assert np.abs(K @ rigid_modes(el.D)).max() < 1e-10 * tr
        A = analytic_energy_matrix(k, pts, g, STEEL.C)
        assert np.abs(el.D.T @ K @ el.D - A).max() <= 1e-9 * np.abs(A).max()


# --- loads ------------------------------------------------------------------

class TestLoads:
    def test_k1_vertex_rule(self):
        f = load_k1(build_geometry(UNIT), [0.0, -1.0])
        np.testing.assert_allclose(f[1::2], -0.25)
        np.testing.assert_allclose(f[0::2], 0.0)

    def test_k1_zero_load(self):
        np.testing.assert_array_equal(load_k1(build_geometry(PENTAGON), [0.0, 0.0]), 0.0)

    def test_k1_rule_rejects_higher_order(self):
        with pytest.raises(ValueError):
            load_k1(build_geometry(UNIT), [1.0, 0.0], k=2)

    def test_k1_exact_for_linear_field_on_square(self):
        b = np.array([0.7, -1.3])
        f = load_k1(build_geometry(UNIT), b)
        v = np.column_stack([2 + UNIT[:, 0] - 3 * UNIT[:, 1], 1 + 4 * UNIT[:, 0]])
        # int (b . v) over the unit square: v averages to its centre value
        exact = b @ np.array([2 + 0.5 - 1.5, 1 + 2.0])
        assert f @ v.ravel() == pytest.approx(exact, rel=1e-14)

    def test_k1_exact_for_constant_field(self, rng):
        g = build_geometry(random_polygon(rng))
        b = np.array([0.3, 2.0])
        f = load_k1(g, g.area * b)
        v = np.tile([1.5, -0.5], g.n_edges)
        assert f @ v == pytest.approx(g.area * b @ [1.5, -0.5], rel=1e-13)

    def test_k2_average(self):
        g = build_geometry(PENTAGON)
        b = lambda p: np.column_stack([p[:, 0] ** 2, 1 + p[:, 0] * p[:, 1]])
        f = load_general(2, g, b)
        qp, qw = fine_polygon_rule(PENTAGON, 10)
        avg = qw @ b(qp) / g.area
        np.testing.assert_allclose(f[-2:], g.area * avg, rtol=1e-10)
        assert np.all(f[:-2] == 0.0)

    def test_k3_polynomial_load_reproduced(self):
        g = build_geometry(PENTAGON)
        c = np.array([[1.0, -2.0], [0.5, 0.25], [3.0, -1.0]])   # rows: 1, xi, eta

        def b(p):
            s = g.scaled(p)
            return c[0] + s[:, :1] * c[1] + s[:, 1:] * c[2]

        f = load_general(3, g, b)
        np.testing.assert_allclose(f[-6:], g.area * c.ravel(), rtol=1e-12, atol=1e-13)

    def test_k3_trigonometric_load_on_hexagon(self):
        mesh = uniform_hexagons(8)
        c = next(i for i, cell in enumerate(mesh.cells) if len(cell) == 6)
        pts = mesh.cell_vertices(c)
        g = mesh.geometries[c]
        b = sine_product().body_load
        f = load_general(3, g, b)
        qp, qw = fine_polygon_rule(pts, 20)
        s = g.scaled(qp)
        q = np.column_stack([s[:, 0] ** a * s[:, 1] ** bb for a, bb in monomial_ordering(1)])
        gram = np.array([[green_moment(pts, a1 + a2, b1 + b2, g.centroid, g.diameter)
                          for a2, b2 in monomial_ordering(1)] for a1, b1 in monomial_ordering(1)])
        coeffs = np.linalg.solve(gram, q.T @ (qw[:, None] * b(qp)))
        ref = g.area * coeffs.ravel()
        assert np.abs(f[-6:] - ref).max() <= 1e-10 * np.abs(ref).max()

    def test_none_load(self):
        assert not load_general(2, build_geometry(UNIT), None).any()

    def test_general_rule_rejects_k1(self):
        with pytest.raises(ValueError):
            load_general(1, build_geometry(UNIT), [1.0, 0.0])


class TestNeumann:
    def test_k1_trapezoid(self):
        f = neumann_edge(1, [0, 0], [0, 2.0], [3.0, 0.0])
        np.testing.assert_allclose(f, [[3.0, 0.0], [3.0, 0.0]])

    def test_k2_simpson(self):
        L, q = 1.5, 2.0
        f = neumann_edge(2, [0, 0], [L, 0], [q, q])
        np.testing.assert_allclose(f[:, 0], [q * L / 6, 4 * q * L / 6, q * L / 6], rtol=1e-15)
        np.testing.assert_allclose(f[:, 1], f[:, 0])

    def test_zero_traction(self):
        assert not neumann_edge(3, [0, 0], [1, 1], [0.0, 0.0]).any()

    def test_callable_traction_gets_outward_normal(self):
        seen = {}

        def t(pts, n):
            seen["n"] = n
            return np.zeros((len(pts), 2))

        neumann_edge(1, [0, 0], [1, 0], t)
        np.testing.assert_allclose(seen["n"], [0.0, -1.0])

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_linear_traction_resultant(self, k):
        # summed nodal forces equal the resultant; the rule is exact for linear t
        p0, p1 = np.array([0.2, 0.1]), np.array([1.1, 0.7])
        t = lambda pts, n: np.column_stack([1 + pts[:, 0], 2 - pts[:, 1]])
        f = neumann_edge(k, p0, p1, t)
        L = np.hypot(*(p1 - p0))
        assert f[:, 0].sum() == pytest.approx(L * (1 + 0.5 * (p0[0] + p1[0])), rel=1e-14)
        assert f[:, 1].sum() == pytest.approx(L * (2 - 0.5 * (p0[1] + p1[1])), rel=1e-14)


def test_convex_polygons_build_for_k4(rng):
    for _ in range(5):
        el = build_element(build_geometry(random_convex_polygon(rng)), 4, STEEL.C)
        assert el.K.shape == (el.layout.n, el.layout.n)
