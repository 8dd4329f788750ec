"""Space-time L2 integrals of the lattice heat kernel and of its distance to
the continuum Dirichlet kernel.

The kernel G^n(t, x, .) is constant on every cell [k/n, (k+1)/n) in its
second argument, and the node samples of phi_j are orthonormal for the
cell-averaged inner product, so every y-integral below reduces to a finite
sum.  Time integrals of exponentials are taken in closed form.  The
brute-force quadrature oracles live in the test suite.
"""
from __future__ import annotations

import math

import numpy as np

from .lattice import GridSpec, SpectralBasis, _phi, _phi_lifted


def _exp_window(rate, a: float, b: float):
    """int_a^b exp(-rate t) dt, with b = inf allowed."""
    rate = np.asarray(rate, dtype=float)
    upper = 0.0 if math.isinf(b) else np.exp(-rate * b)
    return (np.exp(-rate * a) - upper) / rate


def cell_projection(grid: GridSpec, k_max: int) -> np.ndarray:
    """C[k-1, j-1] = int_0^1 phi_k(y) phi_j(k_n(y)) dy for k <= k_max."""
    n = grid.n
    k = np.arange(1, k_max + 1)
    c = np.arange(1, n)  # cell c covers [c/n, (c+1)/n); cell 0 carries phi_j(0) = 0
    cell_int = math.sqrt(2.0) * (np.cos(np.outer(k, c) * np.pi / n)
                                 - np.cos(np.outer(k, c + 1) * np.pi / n)) / (k[:, None] * np.pi)
    node_phi = _phi(np.arange(1, n), grid.nodes)  # (c, j)
    return cell_int @ node_phi


def kernel_gap_integral(n: int, x: float, t_window=(0.0, math.inf), k_max: int | None = None) -> float:
    """int_window int_0^1 |G(t,x,y) - G^n(t,x,y)|^2 dy dt.

    The continuum series is truncated at ``k_max`` modes (default max(2000, 200 n));
    the pure continuum term over [0, b] uses the identity
    sum_k phi_k(x)^2 / (2 k^2 pi^2) = x (1 - x) / 2 for its infinite part.
    """
    grid = GridSpec(n)
    basis = SpectralBasis(grid)
    a, b = t_window
    k_max = k_max or max(2000, 200 * n)
    k = np.arange(1, k_max + 1)
    ck = (k * np.pi) ** 2
    phik = _phi(k, x)
    lam = -basis.eigenvalues
    phin = _phi_lifted(grid, x)

    if a == 0.0:
        tail = 0.0 if math.isinf(b) else np.sum(phik**2 * np.exp(-2 * ck * b) / (2 * ck))
        cont = x * (1 - x) / 2 - tail
    else:
        cont = np.sum(phik**2 * _exp_window(2 * ck, a, b))

    disc = np.sum(phin**2 * _exp_window(2 * lam, a, b))
    cross_rates = ck[:, None] + lam[None, :]
    cross = np.sum(phik[:, None] * phin[None, :] * cell_projection(grid, k_max)
                   * _exp_window(cross_rates, a, b))
    return float(cont + disc - 2 * cross)


def kernel_square_integral(basis: SpectralBasis, t: float, x) -> np.ndarray:
    """int_0^t int_0^1 G^n(s, x, y)^2 dy ds."""
    lam = -basis.eigenvalues
    phin = _phi_lifted(basis.grid, x)
    return np.sum(phin**2 * (1 - np.exp(-2 * lam * t)) / (2 * lam), axis=-1)


def time_increment_integral(basis: SpectralBasis, s: float, t: float, x) -> np.ndarray:
    """int_0^s int_0^1 |G^n(t-r,x,y) - G^n(s-r,x,y)|^2 dy dr for s <= t."""
    lam = -basis.eigenvalues
    phin = _phi_lifted(basis.grid, x)
    return np.sum(phin**2 * np.expm1(-lam * (t - s)) ** 2 * (1 - np.exp(-2 * lam * s)) / (2 * lam), axis=-1)


def recent_window_integral(basis: SpectralBasis, s: float, t: float, x) -> np.ndarray:
    """int_s^t int_0^1 |G^n(t-r,x,y)|^2 dy dr for s <= t."""
    lam = -basis.eigenvalues
    phin = _phi_lifted(basis.grid, x)
    return np.sum(phin**2 * (-np.expm1(-2 * lam * (t - s))) / (2 * lam), axis=-1)


def space_increment_integral(basis: SpectralBasis, t: float, x, y) -> np.ndarray:
    """int_0^t int_0^1 |G^n(t-r,x,z) - G^n(t-r,y,z)|^2 dz dr."""
    lam = -basis.eigenvalues
    d = _phi_lifted(basis.grid, x) - _phi_lifted(basis.grid, y)
    return np.sum(d**2 * (-np.expm1(-2 * lam * t)) / (2 * lam), axis=-1)


def envelope_constants(n: int, xs=(0.25, 0.5), t_max: float = 0.5, samples: int = 400,
                       seed: int = 0) -> dict[str, float]:
    """Largest observed ratios of the three kernel increment integrals to their
    envelopes sqrt(t-s), sqrt(t-s) and |x-y| over random admissible arguments."""
    rng = np.random.default_rng(seed)
    basis = SpectralBasis(GridSpec(n))
    st = np.sort(rng.uniform(0, t_max, size=(samples, 2)), axis=1)
    st = st[st[:, 1] - st[:, 0] > 1e-9]
    c1 = c2 = c3 = 0.0
    for x in xs:
        for s, t in st:
            root = math.sqrt(t - s)
            c1 = max(c1, float(time_increment_integral(basis, s, t, x)) / root)
            c2 = max(c2, float(recent_window_integral(basis, s, t, x)) / root)
        ys = rng.uniform(0, 1, size=samples)
        ts = rng.uniform(1e-6, t_max, size=samples)
        for y, t in zip(ys, ts):
            if abs(x - y) > 1e-9:
                c3 = max(c3, float(space_increment_integral(basis, t, x, y) / abs(x - y)))
    return {"time_increment": c1, "recent_window": c2, "space_increment": c3}


def loglog_slope(ns, values) -> float:
    """Least-squares slope of log(values) against log(ns)."""
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(values, float)), 1)[0])
