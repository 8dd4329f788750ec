"""Lattice discretization of the parabolic obstacle problem

    dZ/dt - Z'' = eta,   Z >= -V,   int (Z + V) d eta = 0,   Z(0, .) = 0,

through the Skorohod system on the interior nodes, plus the checks used to
certify it: weak-form residuals, complementarity, self-convergence and a
Hoelder modulus fit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .lattice import DiscreteLaplacian, GridSpec, PiecewiseLinearField, apply_operator, lift
from .skorohod import BoundaryPath, ConfigError, PreconditionError, SolverConfig, solve


@dataclass(frozen=True)
class ObstacleInstance:
    """Barrier field V(t, x) on [0, T] x [0, 1]; ``V`` is vectorized in (t, x)."""

    V: Callable
    T: float
    smoothness_tag: str = "C12"
    name: str = "custom"

    def __post_init__(self):
        if self.smoothness_tag not in ("C12", "C0"):
            raise ValueError(f"smoothness_tag must be C12 or C0, got {self.smoothness_tag!r}")

    def check_compatible(self, samples: int = 257) -> None:
        x = np.linspace(0, 1, samples)
        v0 = np.asarray(self.V(0.0, x), dtype=float)
        if np.any(v0 < 0):
            raise PreconditionError(f"obstacle {self.name!r} has V(0, x) < 0 (min {v0.min():.3g})")


@dataclass
class ObstacleSolution:
    grid: GridSpec
    dt: float
    Z: np.ndarray
    eta: np.ndarray
    V: np.ndarray
    complementarity_residual: float
    weak_residuals: dict = field(default_factory=dict)

    @property
    def Z_field(self) -> PiecewiseLinearField:
        return PiecewiseLinearField(self.grid, self.dt, self.Z)

    @property
    def eta_field(self) -> np.ndarray:
        return self.eta


def discretize(inst: ObstacleInstance, grid: GridSpec, dt: float) -> BoundaryPath:
    """Sample V at interior nodes and on the time grid t_i = i dt, i = 0..T/dt."""
    steps = round(inst.T / dt)
    if steps < 1 or not math.isclose(steps * dt, inst.T, rel_tol=1e-9, abs_tol=1e-12):
        raise ConfigError(f"dt={dt} does not divide T={inst.T}")
    t = dt * np.arange(steps + 1)
    samples = np.asarray(inst.V(t[:, None], grid.nodes[None, :]), dtype=float)
    return BoundaryPath(grid, dt, np.broadcast_to(samples, (steps + 1, grid.n - 1)).copy())


def solve_obstacle(inst: ObstacleInstance, grid: GridSpec, cfg: SolverConfig) -> ObstacleSolution:
    inst.check_compatible()
    V = discretize(inst, grid, cfg.dt)
    sol = solve(V, cfg)
    return ObstacleSolution(grid, cfg.dt, sol.Z, sol.eta, V.samples, sol.complementarity_residual)


def weak_form_residual(sol: ObstacleSolution, phi: Callable) -> np.ndarray:
    """t_i -> <Z(t_i), phi^n>/n - int_0^t <n^2 A^n phi^n, Z>/n ds - <phi^n, eta(t_i)>/n.

    The time integral is a left-endpoint sum.
    """
    ends = np.asarray(phi(np.array([0.0, 1.0])), dtype=float)
    if np.any(np.abs(ends) > 1e-12):
        raise PreconditionError("test function must vanish at x = 0 and x = 1")
    n = sol.grid.n
    phin = np.asarray(phi(sol.grid.nodes), dtype=float)
    lap_phi = apply_operator(DiscreteLaplacian(sol.grid), phin)
    pairing = sol.Z @ phin / n
    flow = np.concatenate([[0.0], np.cumsum(sol.Z[:-1] @ lap_phi)]) * sol.dt / n
    push = sol.eta @ phin / n
    return pairing - flow - push


def eta_histogram(sol: ObstacleSolution, time_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Reflection mass per (time bin, node cell); returns (bin edges, masses)."""
    steps = sol.eta.shape[0] - 1
    edges_idx = np.linspace(0, steps, time_bins + 1).round().astype(int)
    masses = np.diff(sol.eta[edges_idx], axis=0)
    return edges_idx * sol.dt, masses


def common_sample_grid(n_space: int, steps: int, stride: int = 10):
    """Nodes of lattice ``n_space`` and every ``stride``-th time index (last one included)."""
    idx = np.arange(0, steps + 1, stride)
    if idx[-1] != steps:
        idx = np.append(idx, steps)
    return GridSpec(n_space).nodes, idx


@dataclass
class ConvergenceTable:
    resolutions: list
    gaps: list
    reference_n: int
    monotone: bool

    def rows(self):
        return [{"resolution": n, "gap": g, "reference_n": self.reference_n}
                for n, g in zip(self.resolutions, self.gaps)]


def convergence_study(inst: ObstacleInstance, n_list, cfg: SolverConfig,
                      reference_n: int | None = None, stride: int = 10,
                      eval_nodes: str = "reference") -> ConvergenceTable:
    """Sup-norm gaps of the lattice solutions against the finest resolution.

    Without ``reference_n`` the last entry of ``n_list`` is the reference.
    ``eval_nodes="reference"`` compares on the reference lattice nodes, which
    contain every breakpoint of the coarser lifts when resolutions are nested,
    so the gap is the exact sup over x.  ``"coarse"`` compares on the nodes of
    the coarsest lattice only.
    """
    if eval_nodes not in ("reference", "coarse"):
        raise ConfigError(f"eval_nodes must be 'reference' or 'coarse', got {eval_nodes!r}")
    n_list = list(n_list)
    if len(n_list) < 3:
        raise ConfigError("convergence study needs at least three resolutions")
    if n_list != sorted(n_list) or n_list[0] < 2:
        raise ConfigError("resolutions must be ascending and >= 2")
    if reference_n is None:
        reference_n, n_list = n_list[-1], n_list[:-1]
    elif reference_n <= n_list[-1]:
        raise ConfigError("reference resolution must exceed every studied resolution")

    ref = solve_obstacle(inst, GridSpec(reference_n), cfg)
    steps = ref.Z.shape[0] - 1
    xs, idx = common_sample_grid(reference_n if eval_nodes == "reference" else n_list[0], steps, stride)
    ref_vals = lift(ref.Z[idx], ref.grid, xs)
    gaps = []
    for n in n_list:
        sol = solve_obstacle(inst, GridSpec(n), cfg)
        gaps.append(float(np.max(np.abs(lift(sol.Z[idx], sol.grid, xs) - ref_vals))))
    monotone = all(b < a for a, b in zip(gaps, gaps[1:]))
    return ConvergenceTable(n_list, gaps, reference_n, monotone)


def holder_modulus(sol: ObstacleSolution, samples: int = 4000, seed: int = 0) -> float:
    """max |Z(t,x) - Z(s,y)|^2 / (sqrt|t-s| + |x-y|) over random nearby pairs.

    Pairs are drawn with separations spread log-uniformly over [1e-3, 1] so that
    both short and long range increments are represented.
    """
    if not np.any(sol.Z):
        return 0.0
    rng = np.random.default_rng(seed)
    steps = sol.Z.shape[0] - 1
    T = steps * sol.dt
    field_ = sol.Z_field
    t = rng.uniform(0, T, samples)
    x = rng.uniform(0, 1, samples)
    scale = 10.0 ** rng.uniform(-3, 0, samples)
    s = np.clip(t + scale * T * rng.uniform(-1, 1, samples), 0, T)
    y = np.clip(x + scale * rng.uniform(-1, 1, samples), 0, 1)
    # snap times to the grid so the field is evaluated at computed states
    ti = np.round(t / sol.dt).astype(int)
    si = np.round(s / sol.dt).astype(int)
    a = np.array([field_.at_step(i, xi) for i, xi in zip(ti, x)])
    b = np.array([field_.at_step(i, yi) for i, yi in zip(si, y)])
    denom = np.sqrt(np.abs(ti - si) * sol.dt) + np.abs(x - y)
    keep = denom > 0
    return float(np.max((a - b)[keep] ** 2 / denom[keep]))


# ----------------------------------------------------------------------------
# obstacle fields


def zigzag(x, teeth: int = 5):
    """Fixed piecewise-linear sawtooth in [-1, 1] with ``teeth`` periods on [0, 1]."""
    s = np.asarray(x, dtype=float) * teeth
    return 4.0 * np.abs(s - np.floor(s) - 0.5) - 1.0


def positive_obstacle(T: float = 1.0) -> ObstacleInstance:
    return ObstacleInstance(lambda t, x: np.sin(np.pi * x) + 0.0 * t, T, "C12", "obstacle_positive")


def sign_change_obstacle(T: float = 1.0) -> ObstacleInstance:
    return ObstacleInstance(lambda t, x: (1 - 2 * t) * np.sin(np.pi * x), T, "C12", "obstacle_sign_change")


def rough_obstacle(T: float = 1.0) -> ObstacleInstance:
    """Continuous but not C^{1,2} in x: the sign-change obstacle modulated by a zigzag."""
    return ObstacleInstance(lambda t, x: (1 - 2 * t) * np.sin(np.pi * x) * (1 + 0.3 * zigzag(x)),
                            T, "C0", "obstacle_rough")


OBSTACLE_PRESETS = {
    "obstacle_positive": positive_obstacle,
    "obstacle_sign_change": sign_change_obstacle,
    "obstacle_rough": rough_obstacle,
}


def mollify(inst: ObstacleInstance, m: int, points: int = 65) -> ObstacleInstance:
    """Convolve V in x with a smooth bump of half-width 1/m.

    V is extended oddly across x = 0 and x = 1, which keeps V_m(t, 0) = V_m(t, 1) = 0
    whenever V vanishes there.
    """
    u = np.linspace(-1, 1, points)[1:-1]
    w = np.exp(-1.0 / (1.0 - u**2))
    w /= w.sum()
    shifts = u / m

    def odd_ext(t, x):
        x = np.asarray(x, dtype=float)
        period = np.mod(x, 2.0)
        sign = np.where(period > 1.0, -1.0, 1.0)
        return sign * inst.V(t, np.where(period > 1.0, 2.0 - period, period))

    def V_m(t, x):
        x = np.asarray(x, dtype=float)
        out = 0.0
        for wi, si in zip(w, shifts):
            out = out + wi * odd_ext(t, x - si)
        return out

    return replace(inst, V=V_m, smoothness_tag="C12", name=f"{inst.name}_mollified_{m}")


def sup_field_gap(inst1: ObstacleInstance, inst2: ObstacleInstance, grid_points: int = 513,
                  time_points: int = 201) -> float:
    t = np.linspace(0, min(inst1.T, inst2.T), time_points)[:, None]
    x = np.linspace(0, 1, grid_points)[None, :]
    return float(np.max(np.abs(inst1.V(t, x) - inst2.V(t, x))))


def tabulated_obstacle(t_grid, x_grid, values, name: str = "tabulated",
                       smoothness_tag: str = "C0") -> ObstacleInstance:
    """Bilinear interpolant of a table; ``values`` is row-major (len(t) x len(x))."""
    t_grid = np.asarray(t_grid, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    vals = np.asarray(values, dtype=float).reshape(len(t_grid), len(x_grid))
    interp = RegularGridInterpolator((t_grid, x_grid), vals, method="linear")

    def V(t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        return interp(np.stack([t, x], axis=-1))

    return ObstacleInstance(V, float(t_grid[-1]), smoothness_tag, name)


def load_obstacle(source) -> ObstacleInstance:
    """Build an obstacle from a preset name, a preset dict, or a table dict / JSON path.

    Table form: {"t": [...], "x": [...], "values": [...row-major...]}.
    """
    if isinstance(source, str) and source in OBSTACLE_PRESETS:
        return OBSTACLE_PRESETS[source]()
    if isinstance(source, str):
        with open(source) as fh:
            source = json.load(fh)
    if "preset" in source:
        name = source["preset"]
        if name not in OBSTACLE_PRESETS:
            raise ConfigError(f"unknown obstacle preset {name!r}")
        return OBSTACLE_PRESETS[name](**({"T": source["T"]} if "T" in source else {}))
    try:
        return tabulated_obstacle(source["t"], source["x"], source["values"],
                                  source.get("name", "tabulated"), source.get("smoothness_tag", "C0"))
    except KeyError as exc:
        raise ConfigError(f"obstacle table missing field {exc}") from None
