import json

import numpy as np
import pytest

from polyvem.benchmarks import (ConfigError, aitken_limit, fit_slope, load_problem_config,
                                problem_from_config, run_convergence, run_cook, run_patch,
                                run_stabsweep, solve_config, tip_displacement)
from polyvem.assembly import solve_problem
from polyvem.meshgen import generate, patch_mesh_1a, unit_square_quads
from polyvem.postproc import error_D1
from polyvem.problems import get_problem


class TestFitting:
    def test_exact_power_law(self):
        h = [0.5, 0.25, 0.125, 0.0625]
        assert fit_slope(h, [3 * x ** 2 for x in h]) == pytest.approx(2.0, abs=1e-12)

    def test_nan_on_nonpositive_error(self):
        assert np.isnan(fit_slope([0.5, 0.25], [1e-3, 0.0]))
        assert np.isnan(fit_slope([0.5], [1e-3]))

    def test_aitken_geometric(self):
        seq = [10 - 4 * 0.5 ** j for j in range(5)]
        assert aitken_limit(seq) == pytest.approx(10.0, rel=1e-14)

    def test_aitken_constant(self):
        assert aitken_limit([2.0, 2.0, 2.0]) == 2.0

    def test_aitken_needs_three(self):
        with pytest.raises(ValueError):
            aitken_limit([1.0, 2.0])


class TestPatch:
    @pytest.mark.parametrize("test", ["1a", "1b"])
    def test_quick_run(self, test):
        res = run_patch(test, 1, grid=10)
        assert res.passed and res.n_samples == 100

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown patch test"):
            run_patch("1c", 1)


class TestConvergence:
    def test_cubic_exact_at_k3(self):
        res = run_convergence("2a", "concave", 3, levels=2, base=2)
        assert all(r.D1 < 1e-9 for r in res.levels)

    def test_rows_and_slopes(self):
        res = run_convergence("2b", "squares", 1, levels=3, base=4)
        assert [r.n for r in res.levels] == [4, 8, 16]
        assert [r.level for r in res.levels] == [0, 1, 2]
        assert 0.7 < res.slope_D1 < 1.3
        assert res.levels[0].row()["ndofs"] == res.levels[0].ndofs

    def test_parallel_matches_serial(self):
        a = run_convergence("2b", "voronoi", 2, levels=2, base=3, jobs=1)
        b = run_convergence("2b", "voronoi", 2, levels=2, base=3, jobs=2)
        assert [r.D1 for r in a.levels] == [r.D1 for r in b.levels]

    @pytest.mark.parametrize("kwargs, message", [
        ({"test": "1a"}, "2a or 2b"),
        ({"test": "2a", "family": "circles"}, "unknown mesh family"),
        ({"test": "2a", "k": 0}, ">= 1"),
    ])
    def test_argument_errors(self, kwargs, message):
        with pytest.raises(ValueError, match=message):
            run_convergence(**kwargs)


class TestStabSweep:
    def test_unit_alpha_reproduces_default(self):
        sweep = run_stabsweep("quads", 2, alpha0=[1.0], n=4)
        prob = get_problem("2a")
        sol = solve_problem(generate("quads", 4), 2, prob.material, prob.bcs, tau=0.5)
        assert sweep.rows[0]["D1"] == error_D1(sol, prob.exact_strain)
        assert sweep.rows[0]["tau"] == 0.5

    def test_ratio(self):
        sweep = run_stabsweep("triangles", 1, alpha0=[0.1, 1.0, 10.0], n=4)
        d = [r["D1"] for r in sweep.rows]
        assert sweep.ratio == max(d) / min(d) >= 1.0

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError, match="positive"):
            run_stabsweep("quads", 1, alpha0=[0.0, 1.0])


class TestCook:
    def test_two_levels(self):
        res = run_cook("quads", 1, levels=2, base=2)
        assert len(res.values) == 2 and all(v > 0 for v in res.values)
        assert res.monotone

    def test_tip_at_vertex_matches_dof(self):
        prob = get_problem("cook")
        from polyvem.meshgen import COOK_POINT_A, cook_quads
        mesh = cook_quads(4)
        sol = solve_problem(mesh, 2, prob.material, prob.bcs)
        v, dist = tip_displacement(sol)
        assert dist < 1e-12
        i = int(np.argmin(np.hypot(*(mesh.vertices - COOK_POINT_A).T)))
        assert v == pytest.approx(sol.vertex_displacements()[i, 1], rel=1e-14)

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="unknown Cook mesh family"):
            run_cook("triangles", 1, levels=1)


PATCH_1A_CONFIG = {
    "k": 2,
    "material": {"E": 7000.0, "nu": 0.3},
    "dirichlet": [{"on": "left", "components": "u"}],
    "neumann": [{"on": "right", "traction": [2000.0, 0.0]}],
    "points": [{"at": [0.0, 0.0], "components": "v"}],
    "exact": "1a",
}


class TestConfig:
    def test_patch_config_reproduces_1a(self):
        mesh = patch_mesh_1a()
        cfg = problem_from_config(PATCH_1A_CONFIG, mesh)
        sol, d1, d2 = solve_config(mesh, cfg)
        assert d1 < 1e-12 and d2 < 1e-12

    def test_zero_load_zero_field(self):
        mesh = unit_square_quads(3)
        cfg = problem_from_config({"material": {"lambda": 1.0, "mu": 1.0}, "k": 3,
                                   "dirichlet": [{"on": "all"}]}, mesh)
        sol, d1, d2 = solve_config(mesh, cfg)
        assert not sol.u.any() and d1 is None

    def test_catalog_load_and_data(self):
        mesh = generate("squares", 4)
        cfg = problem_from_config({"material": {"lambda": 1.0, "mu": 1.0}, "k": 2, "body_load": "2b",
                                   "dirichlet": [{"on": "all", "value": "2b"}], "exact": "2b"}, mesh)
        sol, d1, _ = solve_config(mesh, cfg)
        prob = get_problem("2b")
        ref = solve_problem(mesh, 2, prob.material, prob.bcs, prob.body_load)
        np.testing.assert_allclose(sol.u, ref.u, atol=1e-14)
        assert d1 == pytest.approx(error_D1(ref, prob.exact_strain), rel=1e-12)

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "p.json"
        path.write_text(json.dumps(PATCH_1A_CONFIG))
        assert load_problem_config(path, patch_mesh_1a()).k == 2

    @pytest.mark.parametrize("cfg, message", [
        ([], "JSON object"),
        ({}, "'material'"),
        ({"material": {"E": 1.0}}, "exactly"),
        ({"material": {"E": 1.0, "nu": 0.3}, "colour": 1}, "unknown configuration keys"),
        ({"material": {"E": 1.0, "nu": 0.3}, "k": 0}, ">= 1"),
        ({"material": {"E": 1.0, "nu": 0.3}, "tau": -1}, "positive"),
        ({"material": {"E": 1.0, "nu": 0.3}, "dirichlet": [{"on": "middle"}]}, r"dirichlet\[0\]"),
        ({"material": {"E": 1.0, "nu": 0.3}, "neumann": [{"on": "top"}]}, "missing 'traction'"),
        ({"material": {"E": 1.0, "nu": 0.3}, "neumann": [{"on": "top", "traction": "2a"}]},
         "displacement tag"),
        ({"material": {"E": 1.0, "nu": 0.3}, "dirichlet": [{"value": [1, 2, 3]}]}, "two numbers"),
        ({"material": {"E": 1.0, "nu": 0.3}, "dirichlet": [{"components": "w"}]}, "components"),
        ({"material": {"E": 1.0, "nu": 0.3}, "exact": "cook3"}, "unknown problem"),
    ])
    def test_errors(self, cfg, message):
        with pytest.raises(ConfigError, match=message):
            problem_from_config(cfg, unit_square_quads(1))

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "p.json"
        path.write_text('{"k": 1,\n "material": }')
        with pytest.raises(ConfigError, match="line 2"):
            load_problem_config(path, unit_square_quads(1))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            load_problem_config(tmp_path / "none.json", unit_square_quads(1))
