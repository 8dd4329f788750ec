import json
import math
import struct

import numpy as np
import pytest

from reflected_lattice.lattice import GridSpec, SpectralBasis
from reflected_lattice.noise import coarsen, sample
from reflected_lattice.skorohod import BoundaryPath, ConfigError, PreconditionError, SolverConfig, solve_projected
from reflected_lattice.spde import (COEFFICIENT_PRESETS, INITIAL_PROFILES, SimulationConfig,
                                    check_hypotheses, coupled_gap, coupled_gap_study, mean_ci,
                                    mild_residual, moment_estimate, simulate, simulate_batch)


def _cfg(name="nualart_pardoux", n=8, dt=1e-3, T=0.1, seed=0, u0="sine"):
    return SimulationConfig(GridSpec(n), dt, T, COEFFICIENT_PRESETS[name], INITIAL_PROFILES[u0], seed, u0)


def _run(cfg, n_fine=None, path=0):
    sheet = sample(n_fine or cfg.grid.n, cfg.dt, cfg.steps, cfg.seed, path)
    driver = coarsen(sheet, cfg.grid.n)
    return simulate(cfg, driver), driver


def test_heat_decay_matches_first_mode():
    cfg = _cfg("heat_decay", n=16, dt=1e-3, T=0.2)
    path, _ = _run(cfg)
    lam = SpectralBasis(cfg.grid).eigenvalues[0]
    t = cfg.dt * np.arange(cfg.steps + 1)
    exact_lattice = np.exp(lam * t)[:, None] * np.sin(np.pi * cfg.grid.nodes)
    np.testing.assert_allclose(path.u, exact_lattice, atol=1e-12)
    assert np.all(path.eta == 0)


def test_zero_start_without_noise_stays_zero():
    path, _ = _run(_cfg("heat_decay", u0="zero"))
    assert np.all(path.u == 0)


def test_reflected_invariants():
    cfg = _cfg(n=16, dt=1e-3, T=0.2, seed=4)
    for p in simulate_batch(cfg, 5):
        assert p.u.min() >= 0
        assert np.all(np.diff(p.eta, axis=0) >= 0)
        sup_u = np.max(np.abs(p.u))
        assert np.all(np.abs(p.nodewise_complementarity()) <= 10 * cfg.dt * (1 + sup_u))
        assert sup_u <= 2 * np.max(np.abs(p.v)) + 1e-8


def test_decomposition_reproduces_reflection():
    cfg = _cfg("lipschitz_demo", n=8, dt=1e-3, T=0.1, seed=9)
    path, _ = _run(cfg)
    sol = solve_projected(BoundaryPath(path.grid, path.dt, path.v), SolverConfig(path.dt))
    np.testing.assert_allclose(sol.Z, path.u - path.v, atol=1e-10)
    np.testing.assert_allclose(sol.eta, path.eta, atol=1e-10)


def test_seeded_determinism():
    cfg = _cfg(seed=123)
    a, _ = _run(cfg)
    b, _ = _run(cfg)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.eta, b.eta)


def test_mild_form_holds_in_deterministic_case():
    cfg = _cfg("heat_decay", n=8, dt=1e-3, T=0.05)
    path, driver = _run(cfg)
    assert mild_residual(path, driver, [(0.02, 0.3), (0.05, 0.5)]) < 1e-12


def test_mild_residual_shrinks_with_dt():
    # the same sheet drives three time resolutions by merging steps
    n, T, fine_dt = 8, 0.02, 1e-4
    sheet = sample(n, fine_dt, round(T / fine_dt), seed=1)
    probes = [(0.01, 0.5), (0.02, 0.3)]
    res = []
    for factor in (4, 2, 1):
        cfg = _cfg(n=n, dt=fine_dt * factor, T=T, seed=1)
        driver = coarsen(sheet, n, time_factor=factor)
        path = simulate(cfg, driver)
        res.append(mild_residual(path, driver, probes))
    assert res[0] > res[1] > res[2]


def test_mismatched_driver_rejected():
    cfg = _cfg(n=8)
    other = coarsen(sample(4, cfg.dt, cfg.steps, 0), 4)
    with pytest.raises(ConfigError):
        simulate(cfg, other)


def test_config_validation():
    with pytest.raises(ConfigError):
        SimulationConfig(GridSpec(4), 0.3, 1.0, COEFFICIENT_PRESETS["heat_decay"])
    with pytest.raises(PreconditionError):
        SimulationConfig(GridSpec(4), 0.1, 1.0, COEFFICIENT_PRESETS["heat_decay"], lambda x: np.cos(x))


def test_lipschitz_demo_constants_hold():
    coeffs = COEFFICIENT_PRESETS["lipschitz_demo"]
    ratios = check_hypotheses(coeffs, T=1.0, probes=20000)
    assert ratios["lipschitz_ratio"] <= coeffs.lipschitz_constant + 1e-12
    assert ratios["growth_ratio"] <= coeffs.growth_constant + 1e-12


def test_coupled_gap_is_zero_for_exact_deterministic_refinement():
    cfg = _cfg("heat_decay", u0="zero", dt=1e-3, T=0.05)
    sheet = sample(16, cfg.dt, cfg.steps, 0)
    assert coupled_gap(cfg, sheet, (4, 8)) == 0.0


def test_coupled_gap_study_rows_carry_seed():
    rows = coupled_gap_study(_cfg(dt=1e-3, T=0.05, seed=77), [(4, 8), (8, 16)], M=4)
    assert [r["seed"] for r in rows] == [77, 77]
    assert all(r["ci_low"] <= r["mean_gap_p"] <= r["ci_high"] for r in rows)
    with pytest.raises(ConfigError):
        coupled_gap_study(_cfg(), [(4, 12)], M=4)


def test_moment_estimate_deterministic_decay():
    r = moment_estimate(_cfg("heat_decay", n=16), p=2, M=10)
    assert r["estimate"] == pytest.approx(1.0, abs=1e-12)
    assert moment_estimate(_cfg("heat_decay", u0="zero"), p=2, M=10)["estimate"] == 0.0
    with pytest.raises(ConfigError):
        moment_estimate(_cfg(), p=2, M=5)
    with pytest.raises(ConfigError):
        moment_estimate(_cfg(), p=0.5, M=10)


def test_mean_ci_matches_normal_interval():
    x = np.arange(10.0)
    m, lo, hi = mean_ci(x)
    assert m == 4.5
    assert hi - m == pytest.approx(1.959963984540054 * np.std(x, ddof=1) / math.sqrt(10))


def test_export_layout(tmp_path):
    cfg = _cfg(seed=5)
    path, _ = _run(cfg)
    path.export(tmp_path)
    data = (tmp_path / "u.bin").read_bytes()
    n, dt, steps, seed = struct.unpack_from("<qdqQ", data)
    assert (n, dt, steps, seed) == (8, cfg.dt, cfg.steps, 5)
    u = np.frombuffer(data, "<f8", offset=32).reshape(steps + 1, n - 1)
    assert np.array_equal(u, path.u)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 5 and manifest["config"]["coefficients"] == "nualart_pardoux"


def test_deterministic_coupled_gap_matches_mode_profile():
    cfg = _cfg("heat_decay", n=4, dt=1e-3, T=0.2)
    gap = coupled_gap(cfg, sample(8, cfg.dt, cfg.steps, 0), (4, 8))
    t = cfg.dt * np.arange(cfg.steps + 1)[:, None]
    lam4 = SpectralBasis(GridSpec(4)).eigenvalues[0]
    lam8 = SpectralBasis(GridSpec(8)).eigenvalues[0]
    coarse = np.exp(lam4 * t) * np.sin(np.pi * GridSpec(4).nodes)
    pad = np.pad(coarse, ((0, 0), (1, 1)))
    lifted = np.empty((len(t), 7))
    lifted[:, 1::2] = coarse
    lifted[:, 0::2] = 0.5 * (pad[:, :-1] + pad[:, 1:])
    fine = np.exp(lam8 * t) * np.sin(np.pi * GridSpec(8).nodes)
    assert gap == pytest.approx(float(np.max(np.abs(lifted - fine))), abs=1e-12)
