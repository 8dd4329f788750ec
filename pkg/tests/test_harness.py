import json

import pytest

from reflected_lattice import cli, harness


def _write(tmp_path, name, cfg):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(cfg))
    return p


SPDE = {"kind": "spde_convergence",
        "parameters": {"coefficients": "nualart_pardoux", "pairs": [[4, 8], [8, 16]], "M": 6,
                       "dt": 1e-3, "T": 0.05, "seed": 42}}


def test_list_presets(capsys):
    assert cli.main(["list-presets"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert "lipschitz_demo" in out["coefficients"] and "obstacle_sign_change" in out["obstacles"]


def test_unknown_kind_is_config_error(tmp_path):
    assert cli.main(["run", str(_write(tmp_path, "bad", {"kind": "nope"}))]) == 1
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 1


@pytest.mark.parametrize("bad", [
    {"kind": "moment_study", "parameters": {"n_list": [8]}},
    {"kind": "obstacle_convergence", "parameters": {"n_list": [8, 4, 16]}},
    {"kind": "obstacle_convergence", "parameters": {"n_list": [4, 8, 16], "obstacle": "no_such"}},
    {"kind": "spde_convergence", "parameters": {"seed": 1, "coefficients": "unknown", "n_list": [4, 8]}},
])
def test_config_validation(bad):
    with pytest.raises(harness.ExperimentConfigError):
        harness.ExperimentConfig.from_dict(bad)


def test_output_root_override(tmp_path, monkeypatch):
    monkeypatch.setenv(harness.OUTPUT_ROOT_ENV, str(tmp_path))
    cfg = harness.ExperimentConfig.from_dict(dict(SPDE, output_dir="sub"))
    assert cfg.output_dir == tmp_path / "sub"


def test_property_suite_passes(tmp_path):
    cfg = {"kind": "property_suite", "parameters": {"n_max": 16, "orthant_samples": 500,
                                                     "comparison_pairs": 3, "seed": 0},
           "output_dir": str(tmp_path / "ps")}
    assert cli.main(["run", str(_write(tmp_path, "ps", cfg))]) == 0
    cols, rows = harness.read_csv(tmp_path / "ps" / "results.csv")
    assert "reference" in cols and all(r["passed"] == "true" for r in rows)


def test_property_failure_names_the_property(monkeypatch, tmp_path):
    def broken(n, samples, rng):
        return 1.0, 0.0

    monkeypatch.setattr(harness, "orthant_sign_extremes", broken)
    cfg = harness.ExperimentConfig.from_dict({"kind": "property_suite", "output_dir": str(tmp_path / "x"),
                                              "parameters": {"n_max": 4, "comparison_pairs": 1}})
    code, table = harness.execute(cfg)
    assert code == 2
    assert any("orthant sign property" in f for f in table.failures)


def test_positive_obstacle_gaps_vanish(tmp_path):
    cfg = {"kind": "obstacle_convergence", "output_dir": str(tmp_path / "op"),
           "parameters": {"obstacle": "obstacle_positive", "n_list": [4, 8, 16], "reference_n": 32, "dt": 1e-3}}
    assert cli.main(["run", str(_write(tmp_path, "op", cfg))]) == 0
    _, rows = harness.read_csv(tmp_path / "op" / "results.csv")
    assert all(float(r["gap"]) <= 1e-10 for r in rows)


def test_rerun_is_byte_identical_and_compare(tmp_path, capsys):
    dirs = {}
    for name, params in [("a", {}), ("b", {}), ("seed", {"seed": 43}), ("dt", {"dt": 5e-4})]:
        cfg = json.loads(json.dumps(SPDE))
        cfg["parameters"].update(params)
        cfg["output_dir"] = str(tmp_path / name)
        assert cli.main(["run", str(_write(tmp_path, name, cfg))]) == 0
        dirs[name] = tmp_path / name
    assert (dirs["a"] / "results.csv").read_bytes() == (dirs["b"] / "results.csv").read_bytes()
    manifest = json.loads((dirs["a"] / "manifest.json").read_text())
    assert manifest["seed"] == 42 and manifest["config"]["kind"] == "spde_convergence"

    assert harness.compare_runs(dirs["a"], dirs["b"]).entries == []
    assert cli.main(["compare", str(dirs["a"]), str(dirs["b"])]) == 0
    seed_report = harness.compare_runs(dirs["a"], dirs["seed"])
    assert seed_report.seed_differs and seed_report.entries
    assert cli.main(["compare", str(dirs["a"]), str(dirs["seed"])]) == 0
    dt_report = harness.compare_runs(dirs["a"], dirs["dt"])
    assert any(e["column"] == "mean_gap_p" and not e["within_tolerance"] for e in dt_report.entries)
    assert cli.main(["compare", str(dirs["a"]), str(dirs["dt"])]) != 0


def test_compare_schema_mismatch(tmp_path):
    mom = {"kind": "moment_study", "output_dir": str(tmp_path / "m"),
           "parameters": {"coefficients": "heat_decay", "n_list": [4], "M": 10, "dt": 1e-3, "T": 0.01, "seed": 1}}
    spde = dict(SPDE, output_dir=str(tmp_path / "s"))
    for c in (mom, spde):
        harness.execute(harness.ExperimentConfig.from_dict(c))
    with pytest.raises(harness.SchemaMismatch):
        harness.compare_runs(tmp_path / "m", tmp_path / "s")
    assert cli.main(["compare", str(tmp_path / "m"), str(tmp_path / "s")]) == 1
    assert cli.main(["compare", str(tmp_path / "m"), str(tmp_path / "nowhere")]) == 1


def test_csv_float_format_round_trips():
    assert harness._fmt(0.1) == "0.10000000000000001"
    assert float(harness._fmt(1 / 3)) == 1 / 3
    assert harness._fmt(True) == "true"
