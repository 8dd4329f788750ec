"""Skorohod-type reflection in R^{n-1} on the moving orthant {z >= -V(t)}:

    dZ = n^2 A^n Z dt + d eta,   Z >= -V,   <Z + V, d eta> = 0,   Z(0) = 0.

Two time-stepping backends share one contract: an exponential step for the
linear flow followed by a correction that pushes each coordinate back above
its barrier (exact projection, or a penalty of strength 2/eps).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import DimensionError, GridSpec, SpectralBasis, stencil_unscaled


class PreconditionError(ValueError):
    pass


class ConfigError(ValueError):
    pass


BACKENDS = ("projected_exponential", "penalized")


@dataclass(frozen=True)
class BoundaryPath:
    """Samples V(t_i), i = 0..steps, of a continuous barrier path (rows = time)."""

    grid: GridSpec
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim < 2 or s.shape[-1] != self.grid.n - 1:
            raise DimensionError(f"boundary samples must be (steps+1, ..., {self.grid.n - 1}), got {s.shape}")
        object.__setattr__(self, "samples", s)

    @property
    def steps(self) -> int:
        return self.samples.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)

    @classmethod
    def from_function(cls, grid: GridSpec, dt: float, steps: int, fn) -> "BoundaryPath":
        """Sample ``fn(t) -> R^{n-1}`` on the uniform time grid."""
        t = dt * np.arange(steps + 1)
        return cls(grid, dt, np.array([np.broadcast_to(fn(ti), (grid.n - 1,)) for ti in t]))

    def feasible_at_start(self) -> bool:
        return bool(np.all(self.samples[0] >= 0))


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    backend: str = "projected_exponential"
    epsilon: float | None = None
    complementarity_tol: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}; choose from {BACKENDS}")
        if self.backend == "penalized" and not (self.epsilon is not None and self.epsilon > 0):
            raise ConfigError(f"penalized backend needs epsilon > 0, got {self.epsilon}")

    def tolerance_for(self, V: BoundaryPath) -> float:
        if self.complementarity_tol is not None:
            return self.complementarity_tol
        return default_tolerance(self.dt, V)


def default_tolerance(dt: float, V: BoundaryPath) -> float:
    return 10.0 * dt * (1.0 + float(np.max(np.abs(V.samples))))


@dataclass(frozen=True)
class SkorohodSolution:
    Z: np.ndarray  # (steps+1, ..., n-1)
    eta: np.ndarray  # cumulative, same shape
    dt: float
    complementarity_residual: float
    backend: str = "projected_exponential"

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.eta, axis=0)

    def predictor_states(self) -> np.ndarray:
        """Left limits Z(t_{i+1}-) = Z(t_{i+1}) - d eta_i of the step-wise trajectory."""
        return self.Z[1:] - self.increments


def _check_grid(V: BoundaryPath, cfg: SolverConfig):
    if not math.isclose(V.dt, cfg.dt, rel_tol=1e-12):
        raise ConfigError(f"boundary path dt={V.dt} differs from solver dt={cfg.dt}")
    if not V.feasible_at_start():
        raise PreconditionError("Z(0) = 0 requires V(0) >= 0 componentwise")


def _march(V: BoundaryPath, cfg: SolverConfig, push) -> tuple[np.ndarray, np.ndarray]:
    prop = SpectralBasis(V.grid).propagator(cfg.dt)
    samples = V.samples
    Z = np.zeros_like(samples)
    eta = np.zeros_like(samples)
    for i in range(V.steps):
        pred = Z[i] @ prop  # propagator is symmetric
        d_eta = push(pred, samples[i + 1])
        Z[i + 1] = pred + d_eta
        eta[i + 1] = eta[i] + d_eta
    return Z, eta


def solve_projected(V: BoundaryPath, cfg: SolverConfig) -> SkorohodSolution:
    """Exponential step, then componentwise clipping onto {z >= -V(t_{i+1})}."""
    if cfg.backend != "projected_exponential":
        raise ConfigError(f"solve_projected called with backend {cfg.backend!r}")
    _check_grid(V, cfg)
    Z, eta = _march(V, cfg, lambda pred, v: np.maximum(0.0, -v - pred))
    return SkorohodSolution(Z, eta, cfg.dt, _residual(Z, eta, V.samples), cfg.backend)


def solve_penalized(V: BoundaryPath, cfg: SolverConfig) -> SkorohodSolution:
    """Exponential step plus a penalty force (2/eps) (Z + V)^-.

    The penalty is taken implicitly; for a componentwise piecewise-linear force
    that is the closed form  push = c/(1+c) (Z* + V)^-  with c = 2 dt / eps.
    """
    if cfg.backend != "penalized":
        raise ConfigError(f"solve_penalized called with backend {cfg.backend!r}")
    _check_grid(V, cfg)
    c = 2.0 * cfg.dt / cfg.epsilon
    gain = c / (1.0 + c)
    Z, eta = _march(V, cfg, lambda pred, v: gain * np.maximum(0.0, -(pred + v)))
    return SkorohodSolution(Z, eta, cfg.dt, _residual(Z, eta, V.samples), cfg.backend)


def solve(V: BoundaryPath, cfg: SolverConfig) -> SkorohodSolution:
    if cfg.backend == "penalized":
        return solve_penalized(V, cfg)
    return solve_projected(V, cfg)


def _residual_terms(Z, eta, V):
    return (Z[:-1] + V[:-1]) * np.diff(eta, axis=0)


def _residual(Z, eta, V) -> float:
    return float(np.sum(_residual_terms(Z, eta, V)))


def complementarity_residual(sol: SkorohodSolution, V: BoundaryPath) -> float:
    """sum_k sum_i (Z_k + V_k)(t_i) (eta_k(t_{i+1}) - eta_k(t_i))."""
    if sol.Z.shape != V.samples.shape:
        raise DimensionError(f"solution shape {sol.Z.shape} != boundary shape {V.samples.shape}")
    return _residual(sol.Z, sol.eta, V.samples)


def nodewise_residual(Z: np.ndarray, eta: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Complementarity residual per node (sum over time only)."""
    return np.sum(_residual_terms(Z, eta, V), axis=0)


def comparison_gap(sol1: SkorohodSolution, sol2: SkorohodSolution,
                   V1: BoundaryPath, V2: BoundaryPath) -> tuple[float, float]:
    """(sup |Z1 - Z2|, sup |V1 - V2|) over time and nodes."""
    if sol1.Z.shape != sol2.Z.shape or V1.samples.shape != V2.samples.shape \
            or sol1.Z.shape != V1.samples.shape:
        raise DimensionError("comparison requires matching grids and horizons")
    return float(np.max(np.abs(sol1.Z - sol2.Z))), float(np.max(np.abs(V1.samples - V2.samples)))


def penalty_energy(sol: SkorohodSolution) -> float:
    """Discrete int_0^T |d eta/dt|^2 dt = sum_i |d eta_i|^2 / dt."""
    return float(np.sum(sol.increments**2) / sol.dt)


def orthant_sign_extremes(n: int, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """max <b+, A^n b> and min <b-, A^n b> over random b in R^{n-1}.

    The first should never be positive, the second never negative.
    """
    b = rng.standard_normal((samples, n - 1)) * rng.lognormal(0.0, 2.0, size=(samples, 1))
    ab = stencil_unscaled(b)
    plus = np.einsum("ij,ij->i", np.maximum(b, 0.0), ab)
    minus = np.einsum("ij,ij->i", np.maximum(-b, 0.0), ab)
    return float(plus.max()), float(minus.min())


def random_boundary_path(grid: GridSpec, dt: float, steps: int, rng: np.random.Generator,
                         scale: float = 1.0, modes: int = 4) -> BoundaryPath:
    """Smooth random barrier with V(0) >= 0 that dips below zero later.

    Each node gets a short random trigonometric series in t, so that paths are
    continuous, cheap, and cross zero a few times on [0, T].
    """
    T = dt * steps
    t = dt * np.arange(steps + 1)
    m = grid.n - 1
    freq = rng.uniform(0.5, 6.0, size=(modes, m))
    phase = rng.uniform(0, 2 * np.pi, size=(modes, m))
    amp = rng.standard_normal((modes, m)) / np.arange(1, modes + 1)[:, None]
    wave = np.sum(amp[None] * np.sin(2 * np.pi * freq[None] * t[:, None, None] / max(T, 1e-12) + phase[None]), axis=1)
    wave -= wave[0]
    offset = rng.uniform(0.0, 0.3, size=m)
    return BoundaryPath(grid, dt, scale * (offset + wave))
