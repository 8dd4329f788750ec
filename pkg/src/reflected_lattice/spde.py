"""Reflected lattice SDE system approximating the reflected stochastic heat
equation on [0, 1] with Dirichlet ends:

    du_k = n^2 (A^n u)_k dt + f(t, k/n, u_k) dt + sqrt(n) sigma(t, k/n, u_k) dW^n_k + d eta_k,
    u_k >= 0,   int u_k d eta_k = 0.

One step: exact linear flow through the sine eigenbasis, left-point drift and
noise, then clipping at zero.  The unreflected companion v (same increments,
coefficients evaluated at u) is carried along so that u - v can be checked
against the Skorohod solver with barrier v.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .lattice import GridSpec, PiecewiseLinearField, SpectralBasis, discrete_kernel_rows, lift
from .noise import LatticeDriver, SheetIncrements, coarsen, sample
from .skorohod import ConfigError, PreconditionError


class NumericError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Coefficients:
    """Drift f(t, x, u) and diffusion sigma(t, x, u), vectorized over arrays."""

    f: Callable
    sigma: Callable
    lipschitz_constant: float
    growth_constant: float
    name: str = "custom"


def _zero(t, x, u):
    return np.zeros_like(u)


def _one(t, x, u):
    return np.ones_like(u)


def _logistic_clipped(t, x, u):
    c = np.clip(u, 0.0, 1.0)
    return 0.5 * c * (1.0 - c)


def _sqrt_surrogate(t, x, u):
    return 0.2 * np.minimum(1.0 + np.abs(u), 10.0)


COEFFICIENT_PRESETS = {
    "heat_decay": Coefficients(_zero, _zero, 0.0, 0.0, "heat_decay"),
    "nualart_pardoux": Coefficients(_zero, _one, 0.0, 0.0, "nualart_pardoux"),
    "lipschitz_demo": Coefficients(_logistic_clipped, _sqrt_surrogate, 0.7, 0.5, "lipschitz_demo"),
}

INITIAL_PROFILES = {
    "sine": lambda x: np.sin(np.pi * x),
    "zero": lambda x: np.zeros_like(x),
    "tent": lambda x: np.minimum(x, 1.0 - x),
}


def check_hypotheses(coeffs: Coefficients, T: float, probes: int = 2000, seed: int = 0,
                     u_range: float = 20.0) -> dict[str, float]:
    """Largest observed Lipschitz and linear-growth ratios on random probes.

    Returns ratios to compare against the declared constants.
    """
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, T, probes)
    x, y = rng.uniform(0, 1, (2, probes))
    u, v = rng.uniform(-u_range, u_range, (2, probes))
    lhs = np.abs(coeffs.f(t, x, u) - coeffs.f(t, y, v)) + np.abs(coeffs.sigma(t, x, u) - coeffs.sigma(t, y, v))
    dist = np.abs(x - y) + np.abs(u - v)
    growth = np.abs(coeffs.f(t, x, u)) / (1.0 + np.abs(u))
    return {"lipschitz_ratio": float(np.max(lhs / dist)), "growth_ratio": float(np.max(growth))}


@dataclass(frozen=True)
class SimulationConfig:
    grid: GridSpec
    dt: float
    T: float
    coefficients: Coefficients
    u0: Callable = INITIAL_PROFILES["sine"]
    seed: int = 0
    u0_name: str = "sine"

    def __post_init__(self):
        if not self.dt > 0 or not self.T > 0:
            raise ConfigError("dt and T must be positive")
        steps = round(self.T / self.dt)
        if not math.isclose(steps * self.dt, self.T, rel_tol=1e-9):
            raise ConfigError(f"dt={self.dt} does not divide T={self.T}")
        ends = np.asarray(self.u0(np.array([0.0, 1.0])), dtype=float)
        if np.any(np.abs(ends) > 1e-12):
            raise PreconditionError("initial profile must vanish at x = 0 and x = 1")
        if np.any(self.initial_nodes() < 0):
            raise PreconditionError("initial profile must be nonnegative")

    @property
    def steps(self) -> int:
        return round(self.T / self.dt)

    def initial_nodes(self) -> np.ndarray:
        return np.asarray(self.u0(self.grid.nodes), dtype=float) + np.zeros(self.grid.n - 1)

    def with_grid(self, n: int) -> "SimulationConfig":
        return SimulationConfig(GridSpec(n), self.dt, self.T, self.coefficients, self.u0, self.seed, self.u0_name)

    def describe(self) -> dict:
        return {"n": self.grid.n, "dt": self.dt, "T": self.T, "coefficients": self.coefficients.name,
                "u0": self.u0_name, "seed": self.seed}


class LatticeStepper:
    """Advances u (reflected), v (companion) and eta for a batch of paths."""

    def __init__(self, cfg: SimulationConfig, batch_shape=()):
        self.cfg = cfg
        self.grid = cfg.grid
        self.x = cfg.grid.nodes
        self.prop = SpectralBasis(cfg.grid).propagator(cfg.dt)
        self.root_n = math.sqrt(cfg.grid.n)
        u0 = np.broadcast_to(cfg.initial_nodes(), tuple(batch_shape) + (cfg.grid.n - 1,))
        self.u = u0.copy()
        self.v = u0.copy()
        self.eta = np.zeros_like(self.u)
        self.i = 0

    def forcing(self, u: np.ndarray, dW: np.ndarray) -> np.ndarray:
        t = self.i * self.cfg.dt
        c = self.cfg.coefficients
        F = c.f(t, self.x, u)
        S = c.sigma(t, self.x, u)
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(S))):
            raise NumericError(f"non-finite coefficient values at step {self.i} (t={t:.6g})")
        return self.cfg.dt * F + self.root_n * S * dW

    def step(self, dW: np.ndarray) -> np.ndarray:
        b = self.forcing(self.u, dW)
        pred = self.u @ self.prop + b
        d_eta = np.maximum(0.0, -pred)
        self.u = pred + d_eta
        self.v = self.v @ self.prop + b
        self.eta = self.eta + d_eta
        self.i += 1
        return d_eta


@dataclass
class SimulatedPath:
    grid: GridSpec
    dt: float
    u: np.ndarray
    eta: np.ndarray
    v: np.ndarray
    driver_ref: dict = field(default_factory=dict)
    config: SimulationConfig | None = None

    @property
    def u_field(self) -> PiecewiseLinearField:
        return PiecewiseLinearField(self.grid, self.dt, self.u)

    @property
    def v_field(self) -> PiecewiseLinearField:
        return PiecewiseLinearField(self.grid, self.dt, self.v)

    def nodewise_complementarity(self, pairing: str = "end") -> np.ndarray:
        """sum_i u_k * (eta_k(t_i) - eta_k(t_{i-1})) per node.

        ``pairing="end"`` evaluates u at the end of each increment, where the
        scheme applies the reflection; ``"start"`` uses the left endpoint and
        picks up O(sqrt(n dt)) per reflection event from the noise.
        """
        d_eta = np.diff(self.eta, axis=0)
        u = self.u[1:] if pairing == "end" else self.u[:-1]
        return np.sum(u * d_eta, axis=0)

    def export(self, directory) -> None:
        """Write ``manifest.json`` and ``u.bin`` (header n, dt, steps, seed; float64 rows)."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        steps = self.u.shape[0] - 1
        seed = int(self.driver_ref.get("seed", 0))
        with open(out / "u.bin", "wb") as fh:
            fh.write(struct.pack("<qdqQ", self.grid.n, self.dt, steps, seed))
            fh.write(np.ascontiguousarray(self.u, dtype="<f8").tobytes())
        manifest = {"config": self.config.describe() if self.config else None,
                    "seed": seed, "provenance": self.driver_ref,
                    "field": {"file": "u.bin", "rows": steps + 1, "cols": self.grid.n - 1,
                              "header": "<qdqQ n, dt, steps, seed"}}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _check_driver(cfg: SimulationConfig, driver: LatticeDriver):
    if driver.grid != cfg.grid:
        raise ConfigError(f"driver lattice n={driver.grid.n} differs from config n={cfg.grid.n}")
    if not math.isclose(driver.dt, cfg.dt, rel_tol=1e-12):
        raise ConfigError(f"driver dt={driver.dt} differs from config dt={cfg.dt}")
    if driver.steps != cfg.steps:
        raise ConfigError(f"driver has {driver.steps} steps, config needs {cfg.steps}")


def simulate(cfg: SimulationConfig, driver: LatticeDriver) -> SimulatedPath:
    _check_driver(cfg, driver)
    stepper = LatticeStepper(cfg)
    dW = driver.increments
    shape = (cfg.steps + 1, cfg.grid.n - 1)
    u, v, eta = np.empty(shape), np.empty(shape), np.empty(shape)
    u[0], v[0], eta[0] = stepper.u, stepper.v, stepper.eta
    for i in range(cfg.steps):
        stepper.step(dW[i])
        u[i + 1], v[i + 1], eta[i + 1] = stepper.u, stepper.v, stepper.eta
    ref = {"seed": driver.seed, "n_fine": driver.n_fine, "path": driver.path}
    return SimulatedPath(cfg.grid, cfg.dt, u, eta, v, ref, cfg)


def mild_residual(path: SimulatedPath, driver: LatticeDriver, probes) -> float:
    """max over probes (t, x) of |u^n(t, x) - mild right-hand side|.

    The right-hand side integrates the lattice kernel against the initial data,
    the drift and the noise at left endpoints, and against the stored
    reflection increments at the step ends where they were applied.
    """
    if path.config is None or not path.driver_ref:
        raise PreconditionError("path lacks configuration or driver provenance")
    if (driver.seed, driver.n_fine, driver.path) != (path.driver_ref["seed"], path.driver_ref["n_fine"],
                                                      path.driver_ref["path"]):
        raise PreconditionError("driver does not match the path's provenance")
    cfg = path.config
    _check_driver(cfg, driver)
    basis = SpectralBasis(path.grid)
    n, dt = path.grid.n, path.dt
    x_nodes = path.grid.nodes
    coeffs = cfg.coefficients
    t_idx = np.arange(cfg.steps)
    F = coeffs.f(t_idx[:, None] * dt, x_nodes, path.u[:-1])
    S = coeffs.sigma(t_idx[:, None] * dt, x_nodes, path.u[:-1])
    left_forcing = dt * F + n * S * driver.cell_mass[:, 1:]
    d_eta = np.diff(path.eta, axis=0)

    worst = 0.0
    for t, x in probes:
        N = int(round(t / dt))
        if not 0 <= N <= cfg.steps:
            raise ConfigError(f"probe time {t} outside [0, {cfg.T}]")
        lhs = lift(path.u[N], path.grid, x)
        rows = discrete_kernel_rows(basis, dt * (N - np.arange(N + 1)), x)  # tau = t_N - t_i, i = 0..N
        rhs = rows[0] @ path.u[0]
        if N:
            rhs += np.sum(rows[:N] * left_forcing[:N]) + np.sum(rows[1:] * d_eta[:N])
        worst = max(worst, abs(lhs - rhs / n))
    return float(worst)


def sample_paths(n_fine: int, dt: float, steps: int, seed: int, M: int) -> np.ndarray:
    """Sheet cells for M paths, shape (steps, M, n_fine); path p is keyed by (seed, p)."""
    return np.stack([sample(n_fine, dt, steps, seed, path=p).cells for p in range(M)], axis=1)


def _drivers_for(cells: np.ndarray, n_fine: int, dt: float, seed: int, n: int) -> np.ndarray:
    sheet = SheetIncrements(n_fine=n_fine, dt=dt, seed=seed, cells=cells)
    return coarsen(sheet, n).increments


def _refine_lift(u_coarse: np.ndarray) -> np.ndarray:
    """Values of the lift of a lattice-n vector at the nodes of lattice 2n."""
    pad = np.concatenate([np.zeros(u_coarse.shape[:-1] + (1,)), u_coarse,
                          np.zeros(u_coarse.shape[:-1] + (1,))], axis=-1)
    out = np.empty(u_coarse.shape[:-1] + (2 * u_coarse.shape[-1] + 1,))
    out[..., 1::2] = u_coarse
    out[..., 0::2] = 0.5 * (pad[..., :-1] + pad[..., 1:])
    return out


def coupled_gap(cfg: SimulationConfig, sheet: SheetIncrements, n_pair: tuple[int, int]) -> float:
    """sup over t and x of |u^n - u^{2n}| with both lattices driven by ``sheet``.

    Compared on every time step at the nodes of the finer lattice, which hold
    every breakpoint of both lifts, so the spatial sup is exact.
    """
    gaps = _coupled_gaps(cfg, sheet.cells[:, None, :], sheet.n_fine, sheet.seed, [n_pair])
    return float(gaps[0][0])


def _coupled_gaps(cfg: SimulationConfig, cells: np.ndarray, n_fine: int, seed: int,
                  pairs) -> list[np.ndarray]:
    for a, b in pairs:
        if b != 2 * a:
            raise ConfigError(f"coupled pairs must be (n, 2n), got {(a, b)}")
        if n_fine % b:
            raise ConfigError(f"resolution {b} does not divide n_fine={n_fine}")
    if cells.shape[0] != cfg.steps:
        raise ConfigError(f"sheet has {cells.shape[0]} steps, config needs {cfg.steps}")
    M = cells.shape[1]
    resolutions = sorted({n for pair in pairs for n in pair})
    steppers = {n: LatticeStepper(cfg.with_grid(n), (M,)) for n in resolutions}
    dWs = {n: _drivers_for(cells, n_fine, cfg.dt, seed, n) for n in resolutions}
    sups = [np.zeros(M) for _ in pairs]

    def update():
        for s, (a, b) in zip(sups, pairs):
            diff = np.max(np.abs(_refine_lift(steppers[a].u) - steppers[b].u), axis=-1)
            np.maximum(s, diff, out=s)

    update()
    for i in range(cfg.steps):
        for n in resolutions:
            steppers[n].step(dWs[n][i])
        update()
    return sups


def mean_ci(samples: np.ndarray, level_z: float = 1.959963984540054) -> tuple[float, float, float]:
    """Mean with a normal-approximation confidence interval."""
    samples = np.asarray(samples, dtype=float)
    m = float(math.fsum(samples) / samples.size)
    half = level_z * float(np.std(samples, ddof=1)) / math.sqrt(samples.size) if samples.size > 1 else 0.0
    return m, m - half, m + half


def coupled_gap_study(cfg: SimulationConfig, pairs, M: int, p: float = 2.0,
                      n_fine: int | None = None) -> list[dict]:
    """Monte Carlo mean of sup-gap^p for each coupled pair (n, 2n)."""
    if M < 2:
        raise ConfigError("need at least two paths")
    pairs = [tuple(pr) for pr in pairs]
    n_fine = n_fine or max(b for _, b in pairs)
    cells = sample_paths(n_fine, cfg.dt, cfg.steps, cfg.seed, M)
    sups = _coupled_gaps(cfg, cells, n_fine, cfg.seed, pairs)
    rows = []
    for (a, b), s in zip(pairs, sups):
        mean, lo, hi = mean_ci(s**p)
        rows.append({"n": a, "n_fine_pair": b, "p": p, "M": M, "mean_gap_p": mean,
                     "ci_low": lo, "ci_high": hi, "seed": cfg.seed})
    return rows


def moment_estimate(cfg: SimulationConfig, p: float, M: int, n_fine: int | None = None) -> dict:
    """E[sup_{t,x} |u^n|^p] by Monte Carlo with a 95% normal interval."""
    if p < 1:
        raise ConfigError("moment order must be >= 1")
    if M < 10:
        raise ConfigError("moment estimate needs M >= 10 paths")
    n = cfg.grid.n
    n_fine = n_fine or n
    cells = sample_paths(n_fine, cfg.dt, cfg.steps, cfg.seed, M)
    dW = _drivers_for(cells, n_fine, cfg.dt, cfg.seed, n)
    stepper = LatticeStepper(cfg, (M,))
    sup = np.max(np.abs(stepper.u), axis=-1)
    for i in range(cfg.steps):
        stepper.step(dW[i])
        np.maximum(sup, np.max(np.abs(stepper.u), axis=-1), out=sup)
    mean, lo, hi = mean_ci(sup**p)
    return {"n": n, "p": p, "M": M, "estimate": mean, "ci_low": lo, "ci_high": hi, "seed": cfg.seed}


def simulate_batch(cfg: SimulationConfig, M: int, n_fine: int | None = None) -> list[SimulatedPath]:
    """M independent seeded paths (path p keyed by (cfg.seed, p))."""
    n_fine = n_fine or cfg.grid.n
    out = []
    for p in range(M):
        sheet = sample(n_fine, cfg.dt, cfg.steps, cfg.seed, path=p)
        out.append(simulate(cfg, coarsen(sheet, cfg.grid.n)))
    return out
