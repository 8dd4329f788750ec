"""Experiment configs, result tables and run comparison.

A config is a JSON object::

    {"kind": "obstacle_convergence",
     "parameters": {"obstacle": "obstacle_sign_change", "n_list": [4, 8, 16], ...},
     "output_dir": "runs/obstacle"}

Each run writes ``results.csv`` (17 significant digits, header row) and
``manifest.json`` (config echo, package version, seed, comparison tolerances,
wall-clock timings).  Timings stay out of the CSV so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .lattice import DiscreteLaplacian, GridSpec, SpectralBasis, apply_operator, semigroup_apply
from .obstacle import OBSTACLE_PRESETS, convergence_study, load_obstacle, solve_obstacle
from .skorohod import (BoundaryPath, SolverConfig, comparison_gap, orthant_sign_extremes,
                       random_boundary_path, solve_projected)
from .spde import (COEFFICIENT_PRESETS, INITIAL_PROFILES, SimulationConfig, coupled_gap_study,
                   moment_estimate)

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "REFLECTED_LATTICE_OUTPUT_ROOT"
KINDS = ("property_suite", "obstacle_convergence", "spde_convergence", "moment_study")
STOCHASTIC_KINDS = ("spde_convergence", "moment_study")

EXIT_OK, EXIT_CONFIG, EXIT_ASSERTION = 0, 1, 2


class ExperimentConfigError(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    parameters: dict
    output_dir: Path
    source: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict, default_name: str = "run") -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ExperimentConfigError("config must be a JSON object")
        kind = raw.get("kind")
        if kind not in KINDS:
            raise ExperimentConfigError(f"unknown kind {kind!r}; expected one of {KINDS}")
        params = dict(raw.get("parameters", {}))
        _validate(kind, params)
        out = Path(raw.get("output_dir", default_name))
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        return cls(kind, params, out, raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ExperimentConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw, default_name=path.stem)


def _validate(kind: str, p: dict) -> None:
    def need(name):
        if name not in p:
            raise ExperimentConfigError(f"{kind} config needs parameter {name!r}")

    for key in ("n_list",):
        if key in p and list(p[key]) != sorted(p[key]):
            raise ExperimentConfigError("n_list must be sorted ascending")
    if kind in STOCHASTIC_KINDS:
        need("seed")
    if "coefficients" in p and p["coefficients"] not in COEFFICIENT_PRESETS:
        raise ExperimentConfigError(f"unknown coefficient preset {p['coefficients']!r}")
    if "u0" in p and p["u0"] not in INITIAL_PROFILES:
        raise ExperimentConfigError(f"unknown initial profile {p['u0']!r}")
    if kind == "obstacle_convergence":
        need("n_list")
        obs = p.get("obstacle", "obstacle_sign_change")
        if isinstance(obs, str) and obs not in OBSTACLE_PRESETS and not Path(obs).exists():
            raise ExperimentConfigError(f"unknown obstacle preset or file {obs!r}")
    if kind == "spde_convergence" and "pairs" not in p and "n_list" not in p:
        raise ExperimentConfigError("spde_convergence needs 'pairs' or 'n_list'")
    if kind == "moment_study":
        need("n_list")


# ----------------------------------------------------------------------------
# tables


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[dict]
    tolerances: dict = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(row.get(c, "")) for c in self.columns])
        return buf.getvalue()


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def read_csv(path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)


# ----------------------------------------------------------------------------
# experiment kinds


def _check_row(check: str, ref: str, n, value: float, threshold: float, ok: bool | None = None) -> dict:
    passed = bool(value <= threshold) if ok is None else bool(ok)
    return {"check": check, "reference": ref, "n": n, "value": float(value),
            "threshold": float(threshold), "passed": passed}


def run_property_suite(p: dict) -> ResultTable:
    n_max = int(p.get("n_max", 64))
    seed = int(p.get("seed", 0))
    samples = int(p.get("orthant_samples", 10_000))
    pairs = int(p.get("comparison_pairs", 20))
    dt = float(p.get("dt", 1e-3))
    T = float(p.get("T", 0.5))
    rng = np.random.default_rng(seed)
    rows = []

    n = 2
    while n <= n_max:
        grid = GridSpec(n)
        basis = SpectralBasis(grid)
        lap = DiscreteLaplacian(grid)
        E = basis.vectors
        resid = apply_operator(lap, E.T) - basis.eigenvalues[:, None] * E.T
        rel = float(np.max(np.abs(resid).max(axis=1) / np.abs(basis.eigenvalues)))
        rows.append(_check_row("eigenpairs", "eigenbasis of n^2 A^n", n, rel, 1e-9))
        ortho = float(np.max(np.abs(E.T @ E - np.eye(n - 1))))
        rows.append(_check_row("orthonormality", "eigenbasis of n^2 A^n", n, ortho, 1e-12))
        e = rng.standard_normal(n - 1)
        semi = float(np.max(np.abs(semigroup_apply(basis, 0.03, semigroup_apply(basis, 0.02, e))
                                   - semigroup_apply(basis, 0.05, e))))
        rows.append(_check_row("semigroup_property", "spectral semigroup representation", n, semi, 1e-10))
        n *= 2

    for n in range(2, n_max + 1):
        plus, minus = orthant_sign_extremes(n, samples, rng)
        rows.append(_check_row("orthant_sign_plus", "orthant sign property <b+, A^n b> <= 0", n, plus, 1e-12))
        rows.append(_check_row("orthant_sign_minus", "orthant sign property <b-, A^n b> >= 0", n, -minus, 1e-12))

    steps = round(T / dt)
    cfg = SolverConfig(dt)
    for n in (4, 16):
        worst_margin, worst_resid = -math.inf, 0.0
        for _ in range(pairs):
            V1 = random_boundary_path(GridSpec(n), dt, steps, rng)
            V2 = BoundaryPath(V1.grid, dt, V1.samples + 0.3 * random_boundary_path(GridSpec(n), dt, steps, rng).samples)
            V2 = BoundaryPath(V1.grid, dt, V2.samples - np.minimum(V2.samples[0], 0.0))
            s1, s2 = solve_projected(V1, cfg), solve_projected(V2, cfg)
            lhs, rhs = comparison_gap(s1, s2, V1, V2)
            worst_margin = max(worst_margin, lhs - rhs)
            worst_resid = max(worst_resid, s1.complementarity_residual / cfg.tolerance_for(V1))
            for s, V in ((s1, V1), (s2, V2)):
                if np.min(s.Z + V.samples) < -1e-12 or np.any(np.diff(s.eta, axis=0) < 0):
                    worst_margin = math.inf
        scale = 1.0
        rows.append(_check_row("comparison_estimate", "reflection comparison sup|Z1-Z2| <= sup|V1-V2|", n,
                               worst_margin, 5 * math.sqrt(dt) * scale))
        rows.append(_check_row("complementarity", "reflection complementarity <Z+V, d eta> = 0", n, worst_resid, 1.0))

    # closed-form reflection n = 2, V = -t
    V = BoundaryPath.from_function(GridSpec(2), dt, steps, lambda t: -t)
    sol = solve_projected(V, cfg)
    t = V.times
    eta_err = float(np.max(np.abs(sol.eta[:, 0] - (t + 4 * t * t))))
    rows.append(_check_row("closed_form_eta", "closed-form reflection eta = t + 4t^2 (n=2, V=-t)", 2, eta_err, 20 * dt * max(T, 1.0)))

    pos = solve_obstacle(OBSTACLE_PRESETS["obstacle_positive"](T), GridSpec(min(n_max, 32)), cfg)
    rows.append(_check_row("positive_obstacle", "obstacle problem with V > 0 gives Z = 0, eta = 0", min(n_max, 32),
                           float(np.max(np.abs(pos.Z)) + np.max(pos.eta)), 1e-10))

    failures = [f"{r['check']} (n={r['n']}): {r['reference']} violated, value {r['value']:.3g} > {r['threshold']:.3g}"
                for r in rows if not r["passed"]]
    cols = ["check", "reference", "n", "value", "threshold", "passed"]
    return ResultTable(cols, rows, {"value": {"rtol": 1e-9, "atol": 1e-15}}, failures)


def run_obstacle_convergence(p: dict) -> ResultTable:
    inst = load_obstacle(p.get("obstacle", "obstacle_sign_change"))
    dt = float(p.get("dt", 1e-4))
    cfg = SolverConfig(dt)
    t0 = time.perf_counter()
    table = convergence_study(inst, p["n_list"], cfg, p.get("reference_n"), int(p.get("stride", 10)),
                              p.get("eval_nodes", "reference"))
    elapsed = time.perf_counter() - t0
    rows = [dict(r, obstacle=inst.name, dt=dt, monotone=table.monotone) for r in table.rows()]
    failures = []
    if p.get("require_monotone", False) and not table.monotone:
        failures.append("obstacle self-convergence: gaps not strictly decreasing")
    cols = ["obstacle", "resolution", "reference_n", "dt", "gap", "monotone"]
    return ResultTable(cols, rows, {"gap": {"rtol": 1e-9, "atol": 1e-13}}, failures, {"total_s": elapsed})


def _sim_config(p: dict, n: int) -> SimulationConfig:
    coeffs = COEFFICIENT_PRESETS[p.get("coefficients", "nualart_pardoux")]
    u0_name = p.get("u0", "sine")
    return SimulationConfig(GridSpec(n), float(p.get("dt", 1e-4)), float(p.get("T", 0.25)), coeffs,
                            INITIAL_PROFILES[u0_name], int(p["seed"]), u0_name)


def run_spde_convergence(p: dict) -> ResultTable:
    pairs = [tuple(x) for x in p["pairs"]] if "pairs" in p else \
        [(a, b) for a, b in zip(p["n_list"], p["n_list"][1:])]
    cfg = _sim_config(p, pairs[0][0])
    t0 = time.perf_counter()
    rows = coupled_gap_study(cfg, pairs, int(p.get("M", 100)), float(p.get("p", 2.0)), p.get("n_fine"))
    elapsed = time.perf_counter() - t0
    for r in rows:
        r.update(coefficients=cfg.coefficients.name, dt=cfg.dt, T=cfg.T)
    failures = []
    if p.get("require_monotone", False):
        means = [r["mean_gap_p"] for r in rows]
        if not all(b < a for a, b in zip(means, means[1:])):
            failures.append("coupled SPDE self-convergence: mean sup-gap^p not strictly decreasing")
    cols = ["coefficients", "n", "n_fine_pair", "dt", "T", "p", "M", "mean_gap_p", "ci_low", "ci_high", "seed"]
    return ResultTable(cols, rows, {"mean_gap_p": {"rtol": 1e-9, "atol": 1e-13},
                                    "ci_low": {"rtol": 1e-9, "atol": 1e-13},
                                    "ci_high": {"rtol": 1e-9, "atol": 1e-13}}, failures, {"total_s": elapsed})


def run_moment_study(p: dict) -> ResultTable:
    rows, timings = [], {}
    for n in p["n_list"]:
        cfg = _sim_config(p, n)
        t0 = time.perf_counter()
        r = moment_estimate(cfg, float(p.get("p", 2.0)), int(p.get("M", 200)), p.get("n_fine"))
        timings[str(n)] = time.perf_counter() - t0
        r.update(coefficients=cfg.coefficients.name, dt=cfg.dt, T=cfg.T)
        rows.append(r)
    cols = ["coefficients", "n", "dt", "T", "p", "M", "estimate", "ci_low", "ci_high", "seed"]
    return ResultTable(cols, rows, {"estimate": {"rtol": 1e-9, "atol": 1e-13}}, [], timings)


RUNNERS = {
    "property_suite": run_property_suite,
    "obstacle_convergence": run_obstacle_convergence,
    "spde_convergence": run_spde_convergence,
    "moment_study": run_moment_study,
}


def execute(cfg: ExperimentConfig) -> tuple[int, ResultTable]:
    """Run an experiment and write its artifacts; returns (exit code, table)."""
    table = RUNNERS[cfg.kind](cfg.parameters)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / "results.csv").write_text(table.to_csv())
    manifest = {
        "kind": cfg.kind,
        "config": cfg.source,
        "parameters": cfg.parameters,
        "version": __version__,
        "seed": cfg.parameters.get("seed"),
        "columns": table.columns,
        "tolerances": table.tolerances,
        "failures": table.failures,
        "timings_s": table.timings,
    }
    (cfg.output_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    for msg in table.failures:
        log.error(msg)
    return (EXIT_ASSERTION if table.failures else EXIT_OK), table


def run(config_path) -> int:
    try:
        cfg = ExperimentConfig.load(config_path)
    except ExperimentConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    code, _ = execute(cfg)
    return code


# ----------------------------------------------------------------------------
# comparison


@dataclass
class DiffReport:
    entries: list[dict]
    seed_differs: bool
    mismatched: bool

    def lines(self) -> list[str]:
        out = []
        if self.seed_differs:
            out.append("seeds differ: differences below are statistical")
        for e in self.entries:
            if e["within_tolerance"]:
                flag = "ok"
            else:
                flag = "statistical" if self.seed_differs else "MISMATCH"
            out.append(f"row {e['row']} {e['column']}: {e['a']} vs {e['b']} (|diff|={e['abs_diff']:.3g}) {flag}")
        return out


def _load_run(directory) -> tuple[dict, list[str], list[dict]]:
    d = Path(directory)
    try:
        manifest = json.loads((d / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"missing or unreadable manifest in {d}: {exc}") from None
    cols, rows = read_csv(d / "results.csv")
    return manifest, cols, rows


def compare_runs(dir1, dir2) -> DiffReport:
    m1, c1, r1 = _load_run(dir1)
    m2, c2, r2 = _load_run(dir2)
    if m1.get("kind") != m2.get("kind") or c1 != c2 or len(r1) != len(r2):
        raise SchemaMismatch(f"runs are not comparable: kind {m1.get('kind')} vs {m2.get('kind')}, "
                             f"columns {c1} vs {c2}, rows {len(r1)} vs {len(r2)}")
    seed_differs = m1.get("seed") != m2.get("seed")
    tols = dict(m2.get("tolerances", {}))
    tols.update(m1.get("tolerances", {}))
    entries, mismatched = [], False
    for i, (a, b) in enumerate(zip(r1, r2)):
        for col in c1:
            if a[col] == b[col]:
                continue
            try:
                fa, fb = float(a[col]), float(b[col])
            except ValueError:
                entries.append({"row": i, "column": col, "a": a[col], "b": b[col],
                                "abs_diff": math.inf, "within_tolerance": False})
                mismatched = True
                continue
            tol = tols.get(col, {"rtol": 0.0, "atol": 0.0})
            ok = math.isclose(fa, fb, rel_tol=tol.get("rtol", 0.0), abs_tol=tol.get("atol", 0.0))
            entries.append({"row": i, "column": col, "a": fa, "b": fb, "abs_diff": abs(fa - fb),
                            "within_tolerance": ok})
            mismatched |= not ok
    return DiffReport(entries, seed_differs, mismatched)


def compare_exit_code(report: DiffReport) -> int:
    if report.mismatched and not report.seed_differs:
        return EXIT_ASSERTION
    return EXIT_OK


def list_presets() -> dict[str, list[str]]:
    return {"coefficients": sorted(COEFFICIENT_PRESETS), "obstacles": sorted(OBSTACLE_PRESETS),
            "initial_profiles": sorted(INITIAL_PROFILES), "kinds": list(KINDS)}
