"""Discrete Dirichlet Laplacian on the unit interval, its sine eigenbasis,
the induced semigroup, and the discrete / continuum heat kernels.

Vectors live on the interior nodes k/n, k = 1..n-1.  Boundary values at
x = 0 and x = 1 are implicitly zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.fft import dst


class DimensionError(ValueError):
    """Array length does not match the lattice."""


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform lattice on [0, 1] with resolution ``n`` (mesh width 1/n)."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"lattice resolution must be an integer >= 2, got {self.n!r}")

    @property
    def interior_count(self) -> int:
        return self.n - 1

    @property
    def mesh(self) -> float:
        return 1.0 / self.n

    @property
    def nodes(self) -> np.ndarray:
        """Interior node coordinates k/n."""
        return np.arange(1, self.n) / self.n

    def check(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1:] != (self.n - 1,):
            raise DimensionError(
                f"expected trailing length {self.n - 1} for n={self.n}, got shape {v.shape}")
        return v


@dataclass(frozen=True)
class DiscreteLaplacian:
    """The tridiagonal stencil (1, -2, 1) scaled by n^2."""

    grid: GridSpec

    @property
    def scale(self) -> float:
        return float(self.grid.n) ** 2

    def dense(self) -> np.ndarray:
        """Dense n^2 A^n, for tests and small oracles only."""
        m = self.grid.n - 1
        a = -2.0 * np.eye(m) + np.eye(m, k=1) + np.eye(m, k=-1)
        return self.scale * a

    def apply(self, v: np.ndarray) -> np.ndarray:
        return apply_operator(self, v)


def apply_operator(lap: DiscreteLaplacian, v: np.ndarray) -> np.ndarray:
    """Return n^2 A^n v via the stencil; ``v`` may carry leading batch axes."""
    v = lap.grid.check(v)
    out = -2.0 * v
    out[..., 1:] += v[..., :-1]
    out[..., :-1] += v[..., 1:]
    return lap.scale * out


def stencil_unscaled(v: np.ndarray) -> np.ndarray:
    """A^n v without the n^2 factor (used by the orthant sign checks)."""
    v = np.asarray(v, dtype=float)
    out = -2.0 * v
    out[..., 1:] += v[..., :-1]
    out[..., :-1] += v[..., 1:]
    return out


@dataclass(frozen=True)
class SpectralBasis:
    """Closed-form eigenpairs of n^2 A^n.

    ``vectors[:, j-1]`` is e_j with components sqrt(2/n) sin(j k pi / n).
    """

    grid: GridSpec
    method: str = "dense"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.method not in ("dense", "dst"):
            raise ValueError(f"unknown transform method {self.method!r}")

    @cached_property
    def modes(self) -> np.ndarray:
        return np.arange(1, self.grid.n)

    @cached_property
    def shape_factors(self) -> np.ndarray:
        h = self.modes * np.pi / (2 * self.grid.n)
        return np.sin(h) ** 2 / h**2

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        # -j^2 pi^2 c_j written as -4 n^2 sin^2(j pi / 2n) to avoid cancellation
        n = self.grid.n
        return -4.0 * n * n * np.sin(self.modes * np.pi / (2 * n)) ** 2

    @cached_property
    def vectors(self) -> np.ndarray:
        n = self.grid.n
        k = np.arange(1, n)
        return math.sqrt(2.0 / n) * np.sin(np.outer(k, self.modes) * np.pi / n)

    def forward(self, e: np.ndarray) -> np.ndarray:
        """Coefficients <e, e_j> along the last axis."""
        if self.method == "dst":
            return dst(e, type=1, norm="ortho", axis=-1)
        return e @ self.vectors

    def inverse(self, c: np.ndarray) -> np.ndarray:
        if self.method == "dst":
            return dst(c, type=1, norm="ortho", axis=-1)
        return c @ self.vectors.T

    def propagator(self, t: float) -> np.ndarray:
        """Matrix of exp(n^2 A^n t) assembled from the eigenbasis (cached per t)."""
        if t < 0:
            raise DomainError(f"semigroup time must be >= 0, got {t}")
        key = float(t)
        p = self._cache.get(key)
        if p is None:
            e = self.vectors
            p = (e * np.exp(self.eigenvalues * t)) @ e.T
            self._cache[key] = p
        return p


def eigenpair(grid: GridSpec, j: int) -> tuple[float, np.ndarray]:
    if not 1 <= j <= grid.n - 1:
        raise IndexError(f"mode index must lie in 1..{grid.n - 1}, got {j}")
    n = grid.n
    lam = -4.0 * n * n * math.sin(j * math.pi / (2 * n)) ** 2
    vec = math.sqrt(2.0 / n) * np.sin(j * np.arange(1, n) * np.pi / n)
    return lam, vec


def semigroup_apply(basis: SpectralBasis, t: float, e: np.ndarray) -> np.ndarray:
    """exp(n^2 A^n t) e through the sine eigenbasis."""
    if t < 0:
        raise DomainError(f"semigroup time must be >= 0, got {t}")
    e = basis.grid.check(e)
    if t == 0:
        return e.copy()
    return basis.inverse(np.exp(basis.eigenvalues * t) * basis.forward(e))


def grid_floor(y, grid: GridSpec):
    """k_n(y) = floor(n y) / n, with k_n(1) = 1."""
    y_arr = np.asarray(y, dtype=float)
    if np.any((y_arr < 0) | (y_arr > 1)) or np.any(np.isnan(y_arr)):
        raise DomainError("grid_floor expects y in [0, 1]")
    out = np.floor(grid.n * y_arr) / grid.n
    return float(out) if out.ndim == 0 else out


def lift(values: np.ndarray, grid: GridSpec, x):
    """Piecewise-linear interpolation of node values with zero boundary values.

    ``values`` may carry leading axes (e.g. time); ``x`` may be scalar or 1-D.
    """
    values = grid.check(values)
    x_arr = np.asarray(x, dtype=float)
    if np.any((x_arr < 0) | (x_arr > 1)) or np.any(np.isnan(x_arr)):
        raise DomainError("lift expects x in [0, 1]")
    n = grid.n
    pad = np.zeros(values.shape[:-1] + (n + 1,))
    pad[..., 1:n] = values
    s = n * np.atleast_1d(x_arr)
    k = np.minimum(np.floor(s).astype(int), n - 1)
    w = s - k
    out = pad[..., k] + w * (pad[..., k + 1] - pad[..., k])
    if x_arr.ndim == 0:
        return out[..., 0] if out.ndim > 1 else float(out[0])
    return out


def lift_matrix(grid: GridSpec, x) -> np.ndarray:
    """Linear map node values -> lifted values at points ``x`` (shape len(x) x (n-1))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return lift(np.eye(grid.n - 1), grid, x).T


# ----------------------------------------------------------------------------
# heat kernels


def _phi(j, x):
    return math.sqrt(2.0) * np.sin(np.multiply.outer(x, j) * np.pi)


def _phi_lifted(grid: GridSpec, x) -> np.ndarray:
    """phi_j^n(x) for all modes; shape x.shape + (n-1,)."""
    j = np.arange(1, grid.n)
    node_vals = _phi(j, grid.nodes)  # (k, j)
    return np.moveaxis(lift(node_vals.T, grid, np.asarray(x, dtype=float)), 0, -1)


def discrete_kernel(basis: SpectralBasis, t: float, x, y):
    """G^n(t, x, y) = sum_j exp(lambda_j t) phi_j^n(x) phi_j(k_n(y))."""
    if t <= 0:
        raise DomainError(f"kernel time must be > 0, got {t}")
    grid = basis.grid
    x_arr, y_arr = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    px = _phi_lifted(grid, x_arr)
    py = _phi(basis.modes, grid_floor(y_arr, grid))
    out = np.sum(np.exp(basis.eigenvalues * t) * px * py, axis=-1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class KernelTruncation:
    """Series truncation for the continuum Dirichlet heat kernel."""

    tolerance: float = 1e-10

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("truncation tolerance must be positive")

    def max_terms(self, t: float) -> int:
        return math.ceil(math.sqrt(math.log(1.0 / self.tolerance) / (math.pi**2 * t))) + 5


def continuum_kernel(t: float, x, y, trunc: KernelTruncation | None = None):
    """Truncated G(t, x, y) = sum_k exp(-k^2 pi^2 t) phi_k(x) phi_k(y)."""
    if t <= 0:
        raise DomainError(f"kernel time must be > 0, got {t}")
    trunc = trunc or KernelTruncation()
    k = np.arange(1, trunc.max_terms(t) + 1)
    x_arr, y_arr = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    out = np.sum(np.exp(-(k * np.pi) ** 2 * t) * _phi(k, x_arr) * _phi(k, y_arr), axis=-1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PiecewiseLinearField:
    """Node values on a uniform time grid, lifted linearly in x with zero ends."""

    grid: GridSpec
    dt: float
    values: np.ndarray  # (steps+1, n-1)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.shape[0])

    def at_step(self, i, x):
        return lift(self.values[i], self.grid, x)

    def __call__(self, t, x):
        """Evaluate at (t, x); linear in t between samples."""
        t_arr = np.asarray(t, dtype=float)
        last = self.values.shape[0] - 1
        s = np.clip(t_arr / self.dt, 0, last)
        i = np.minimum(np.floor(s).astype(int), max(last - 1, 0))
        w = s - i
        lo = lift(self.values[i], self.grid, x)
        hi = lift(self.values[np.minimum(i + 1, last)], self.grid, x)
        return lo + w * (hi - lo)

    def sup_norm(self) -> float:
        # piecewise-linear with zero ends: the sup is attained at a node
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def discrete_kernel_rows(basis: SpectralBasis, taus, x: float) -> np.ndarray:
    """G^n(tau, x, k/n) for every tau >= 0 and node k; shape (len(taus), n-1).

    At tau = 0 the series is finite and equals n times the lifted unit vectors.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus < 0):
        raise DomainError("kernel rows need tau >= 0")
    px = _phi_lifted(basis.grid, float(x))
    node_phi = _phi(basis.modes, basis.grid.nodes)  # (k, j)
    return (np.exp(np.outer(taus, basis.eigenvalues)) * px) @ node_phi.T
