import numpy as np
import pytest

from polyvem.meshgen import generate, patch_mesh_1a, patch_mesh_1b
from polyvem.problems import (CATALOG, boundary_data_mismatch, cook_membrane, equilibrium_residual,
                              get_problem, stress_of_gradient)


@pytest.mark.parametrize("name, mesh", [("1a", patch_mesh_1a()), ("1b", patch_mesh_1b()),
                                        ("2a", generate("squares", 4)), ("2b", generate("voronoi", 4))])
def test_exact_solution_satisfies_boundary_data(name, mesh):
    assert boundary_data_mismatch(get_problem(name), mesh) <= 1e-10


@pytest.mark.parametrize("name", ["1a", "1b", "2a", "2b"])
def test_exact_solution_is_in_equilibrium(name, rng):
    pts = rng.uniform(0.05, 0.95, (40, 2))
    assert equilibrium_residual(get_problem(name), pts) <= 1e-7


@pytest.mark.parametrize("name", ["1a", "1b"])
def test_patch_stress_is_constant(name, rng):
    prob = get_problem(name)
    pts = rng.uniform(0, 1, (10, 2))
    sig = stress_of_gradient(prob.material, prob.exact_gradient(pts))
    np.testing.assert_allclose(sig, np.tile(prob.exact_stress, (10, 1)), atol=1e-10 * np.abs(prob.exact_stress).max())


def test_2b_vanishes_on_boundary():
    prob = get_problem("2b")
    t = np.linspace(0, 1, 7)
    edge = np.column_stack([t, np.zeros_like(t)])
    assert np.abs(prob.exact_displacement(edge)).max() < 1e-15


def test_2a_has_no_body_load():
    assert get_problem("2a").body_load is None


def test_wrong_load_breaks_equilibrium(rng):
    prob = get_problem("2b")
    prob.body_load = lambda p: np.zeros((len(p), 2))
    assert equilibrium_residual(prob, rng.uniform(0.1, 0.9, (10, 2))) > 1e-2


def test_cook_has_no_exact_solution():
    prob = cook_membrane()
    assert not prob.has_exact
    with pytest.raises(ValueError, match="no exact solution"):
        equilibrium_residual(prob, np.zeros((1, 2)))


def test_catalog():
    assert sorted(CATALOG) == ["1a", "1b", "2a", "2b", "cook"]
    with pytest.raises(ValueError, match="unknown problem"):
        get_problem("3c")


def test_lame_parameters_are_forwarded():
    prob = get_problem("2a", lam=2.0, mu=0.5)
    np.testing.assert_allclose(prob.material.C, [[3.0, 2.0, 0.0], [2.0, 3.0, 0.0], [0.0, 0.0, 0.5]])
