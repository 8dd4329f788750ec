import json

import numpy as np
import pytest

from reflected_lattice.lattice import GridSpec
from reflected_lattice.obstacle import (ObstacleInstance, convergence_study, discretize, eta_histogram,
                                        holder_modulus, load_obstacle, mollify, positive_obstacle,
                                        rough_obstacle, sign_change_obstacle, solve_obstacle,
                                        sup_field_gap, tabulated_obstacle, weak_form_residual)
from reflected_lattice.skorohod import (ConfigError, PreconditionError, SolverConfig, comparison_gap,
                                        solve)

CFG = SolverConfig(1e-3)


def test_positive_obstacle_gives_zero_solution():
    sol = solve_obstacle(positive_obstacle(), GridSpec(32), CFG)
    assert np.max(np.abs(sol.Z)) <= 1e-12
    assert np.all(sol.eta == 0)


def test_sign_change_obstacle_matches_contact_profile():
    # before t = 1/2 the barrier is slack; afterwards Z rides on -V = (2t - 1) sin(pi x)
    n = 32
    sol = solve_obstacle(sign_change_obstacle(), GridSpec(n), CFG)
    t = CFG.dt * np.arange(sol.Z.shape[0])
    exact = np.maximum(2 * t - 1, 0)[:, None] * np.sin(np.pi * GridSpec(n).nodes)
    assert np.min(sol.Z + sol.V) >= -1e-12
    assert np.all(sol.Z[t <= 0.5] == 0)
    assert np.max(np.abs(sol.Z - exact)) < 1e-2
    assert np.all(np.diff(sol.eta, axis=0) >= 0)


def test_infeasible_obstacle_rejected():
    bad = ObstacleInstance(lambda t, x: -np.ones_like(x) + 0 * t, 1.0)
    with pytest.raises(PreconditionError):
        solve_obstacle(bad, GridSpec(4), CFG)


def test_dt_must_divide_horizon():
    with pytest.raises(ConfigError):
        discretize(sign_change_obstacle(T=1.0), GridSpec(4), 0.3)


def test_weak_form_residual_is_small_and_linear():
    sol = solve_obstacle(sign_change_obstacle(), GridSpec(16), CFG)

    def phi1(x):
        return np.sin(np.pi * x)

    def phi2(x):
        return x * (1 - x)

    r1, r2 = weak_form_residual(sol, phi1), weak_form_residual(sol, phi2)
    assert np.max(np.abs(r1)) < 10 * CFG.dt
    combo = weak_form_residual(sol, lambda x: 2 * phi1(x) - 3 * phi2(x))
    np.testing.assert_allclose(combo, 2 * r1 - 3 * r2, atol=1e-12)


def test_weak_form_residual_needs_vanishing_test_function():
    sol = solve_obstacle(positive_obstacle(), GridSpec(4), CFG)
    with pytest.raises(PreconditionError):
        weak_form_residual(sol, lambda x: np.ones_like(x))


def test_mollified_chain_respects_comparison():
    inst = rough_obstacle()
    grid = GridSpec(16)
    base = discretize(inst, grid, CFG.dt)
    ref = solve(base, CFG)
    for m in (4, 16, 64):
        Vm = discretize(mollify(inst, m), grid, CFG.dt)
        lhs, rhs = comparison_gap(solve(Vm, CFG), ref, Vm, base)
        assert lhs <= rhs + 1e-12
    assert sup_field_gap(mollify(inst, 64), inst) < sup_field_gap(mollify(inst, 4), inst)


def test_mollify_keeps_zero_ends():
    vm = mollify(rough_obstacle(), 8).V(0.3, np.array([0.0, 1.0]))
    np.testing.assert_allclose(vm, 0.0, atol=1e-12)


def test_tabulated_obstacle_roundtrip(tmp_path):
    t = np.linspace(0, 1, 11)
    x = np.linspace(0, 1, 9)
    vals = (1 - 2 * t)[:, None] * np.sin(np.pi * x)[None, :]
    table = {"t": t.tolist(), "x": x.tolist(), "values": vals.ravel().tolist(), "name": "table"}
    path = tmp_path / "obs.json"
    path.write_text(json.dumps(table))
    inst = load_obstacle(str(path))
    assert inst.name == "table" and inst.T == 1.0
    np.testing.assert_allclose(inst.V(t[:, None], x[None, :]), vals, atol=1e-12)
    direct = tabulated_obstacle(t, x, vals)
    grid = GridSpec(8)
    np.testing.assert_array_equal(discretize(inst, grid, 0.01).samples, discretize(direct, grid, 0.01).samples)


def test_load_obstacle_variants():
    assert load_obstacle("obstacle_positive").name == "obstacle_positive"
    assert load_obstacle({"preset": "obstacle_sign_change", "T": 0.5}).T == 0.5
    with pytest.raises(ConfigError):
        load_obstacle({"preset": "nothing"})
    with pytest.raises(ConfigError):
        load_obstacle({"t": [0, 1]})


def test_convergence_study_gaps_decrease():
    table = convergence_study(sign_change_obstacle(), [4, 8, 16], SolverConfig(1e-3), reference_n=32)
    assert table.monotone
    assert [r["resolution"] for r in table.rows()] == [4, 8, 16]


def test_convergence_study_validation():
    with pytest.raises(ConfigError):
        convergence_study(sign_change_obstacle(), [4, 8], CFG)
    with pytest.raises(ConfigError):
        convergence_study(sign_change_obstacle(), [8, 4, 16], CFG)
    with pytest.raises(ConfigError):
        convergence_study(sign_change_obstacle(), [4, 8, 16], CFG, reference_n=16)


def test_eta_histogram_accounts_for_all_mass():
    sol = solve_obstacle(sign_change_obstacle(), GridSpec(8), CFG)
    edges, masses = eta_histogram(sol, 10)
    assert len(edges) == 11
    np.testing.assert_allclose(masses.sum(axis=0), sol.eta[-1], rtol=1e-12)


def test_holder_modulus_stable_in_n():
    vals = [holder_modulus(solve_obstacle(sign_change_obstacle(), GridSpec(n), CFG), samples=1000)
            for n in (8, 16, 32)]
    assert max(vals) / min(vals) < 2
    assert holder_modulus(solve_obstacle(positive_obstacle(), GridSpec(8), CFG)) == 0.0


def test_smooth_obstacle_push_density_is_stable():
    # eta increments / dt behave like an L2 density: the discrete norm settles as dt halves
    norms = []
    for dt in (4e-4, 2e-4, 1e-4):
        sol = solve_obstacle(sign_change_obstacle(), GridSpec(16), SolverConfig(dt))
        rate = np.diff(sol.eta, axis=0) / dt
        norms.append(float(np.sqrt(np.sum(rate**2) * dt / 16)))
    assert abs(norms[2] / norms[1] - 1) < 0.05 and abs(norms[1] / norms[0] - 1) < 0.05
