"""Brownian-sheet cell increments with counter-based seeding, and their
coarsening into lattice drivers.

Each Gaussian is a function of (seed, path, step, cell) alone: a Philox
stream keyed by (seed, path) whose counter is positioned at the start of the
requested step.  Any block of steps can therefore be regenerated without
replaying the steps before it.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .lattice import GridSpec


class NoiseConfigError(ValueError):
    pass


_HEADER = struct.Struct("<qdqQ")  # n_fine, dt, steps, seed


def _words_per_step(n_fine: int) -> int:
    # Philox emits 4 words per counter value; pad so every step starts on a boundary
    return 4 * math.ceil(n_fine / 4)


def standard_normals(seed: int, path: int, n_fine: int, step_start: int, step_stop: int) -> np.ndarray:
    """Standard normals for cells of steps [step_start, step_stop), shape (steps, n_fine)."""
    stride = _words_per_step(n_fine)
    gen = np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, path],
                           counter=[step_start * stride // 4, 0, 0, 0])
    raw = gen.random_raw((step_stop - step_start) * stride).reshape(-1, stride)[:, :n_fine]
    # 53-bit midpoint uniforms never hit 0 or 1
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


@dataclass(frozen=True)
class SheetIncrements:
    """W-mass of every cell [t_i, t_i+1] x [c/n_fine, (c+1)/n_fine]."""

    n_fine: int
    dt: float
    seed: int
    cells: np.ndarray  # (steps, n_fine)
    path: int = 0

    @property
    def steps(self) -> int:
        return self.cells.shape[0]

    def dump(self, filename) -> None:
        """Little-endian binary: header (n_fine, dt, steps, seed) then float64 cells."""
        with open(filename, "wb") as fh:
            fh.write(_HEADER.pack(self.n_fine, self.dt, self.steps, self.seed))
            fh.write(np.ascontiguousarray(self.cells, dtype="<f8").tobytes())

    @classmethod
    def load(cls, filename, path: int = 0) -> "SheetIncrements":
        data = Path(filename).read_bytes()
        n_fine, dt, steps, seed = _HEADER.unpack_from(data)
        cells = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(steps, n_fine)
        return cls(n_fine=n_fine, dt=dt, seed=seed, cells=cells.astype(float), path=path)


def sample(n_fine: int, dt: float, steps: int, seed: int, path: int = 0) -> SheetIncrements:
    """Sheet increments with variance dt / n_fine per cell."""
    if n_fine < 2:
        raise NoiseConfigError(f"n_fine must be >= 2, got {n_fine}")
    if not dt > 0 or steps <= 0:
        raise NoiseConfigError(f"need dt > 0 and steps > 0, got dt={dt}, steps={steps}")
    z = standard_normals(seed, path, n_fine, 0, steps)
    return SheetIncrements(n_fine=n_fine, dt=dt, seed=seed, cells=z * math.sqrt(dt / n_fine), path=path)


def sample_block(n_fine: int, dt: float, seed: int, step_start: int, step_stop: int,
                 path: int = 0) -> np.ndarray:
    """Cells for a sub-range of steps, identical to the matching rows of :func:`sample`."""
    if not 0 <= step_start <= step_stop:
        raise NoiseConfigError("step block out of range")
    return standard_normals(seed, path, n_fine, step_start, step_stop) * math.sqrt(dt / n_fine)


def _pairwise_coarsen(cells: np.ndarray, factor: int, axis: int) -> np.ndarray:
    """Sum groups of ``factor`` neighbours along ``axis``.

    Powers of two are reduced by repeated halving, so the sums at every
    intermediate level are themselves exact sums of the next finer level.
    Other factors are summed strictly left to right.
    """
    cells = np.moveaxis(cells, axis, -1)
    if factor & (factor - 1) == 0:
        while factor > 1:
            cells = cells[..., 0::2] + cells[..., 1::2]
            factor //= 2
    else:
        groups = cells.reshape(cells.shape[:-1] + (-1, factor))
        acc = groups[..., 0].copy()
        for r in range(1, factor):
            acc += groups[..., r]
        cells = acc
    return np.moveaxis(cells, -1, axis)


@dataclass(frozen=True)
class LatticeDriver:
    """Per-step Brownian increments dW^n_k for nodes k = 1..n-1.

    ``cell_mass[:, k]`` is the sheet mass of [k/n, (k+1)/n] (k = 0..n-1);
    ``increments = sqrt(n) * cell_mass[:, 1:]`` has variance dt per entry.
    """

    grid: GridSpec
    dt: float
    cell_mass: np.ndarray
    seed: int
    n_fine: int
    path: int = 0

    @property
    def increments(self) -> np.ndarray:
        return math.sqrt(self.grid.n) * self.cell_mass[..., 1:]

    @property
    def steps(self) -> int:
        return self.cell_mass.shape[-2]


def coarsen(sheet: SheetIncrements, n: int, time_factor: int = 1) -> LatticeDriver:
    """Driver for lattice ``n`` from the sheet; optionally merge ``time_factor`` steps."""
    if n < 2 or sheet.n_fine % n:
        raise NoiseConfigError(f"resolution {n} does not divide n_fine={sheet.n_fine}")
    if time_factor < 1 or sheet.steps % time_factor:
        raise NoiseConfigError(f"time factor {time_factor} does not divide steps={sheet.steps}")
    mass = _pairwise_coarsen(sheet.cells, sheet.n_fine // n, axis=-1)
    if time_factor > 1:
        mass = _pairwise_coarsen(mass, time_factor, axis=-2)
    return LatticeDriver(grid=GridSpec(n), dt=sheet.dt * time_factor, cell_mass=mass,
                         seed=sheet.seed, n_fine=sheet.n_fine, path=sheet.path)


def stack_drivers(drivers: list[LatticeDriver]) -> np.ndarray:
    """Increments of several paths as one (steps, paths, n-1) array."""
    return np.stack([d.increments for d in drivers], axis=1)
