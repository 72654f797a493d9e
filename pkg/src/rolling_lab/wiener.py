"""Classical Wiener space on a uniform dyadic grid.

Brownian paths are stored by their increments; Cameron-Martin paths by
their slopes, constant on each grid cell, so that ``omega + eps*h`` is
represented exactly on the grid.  Increments and slopes may carry leading
batch axes: ``(..., n_steps, k)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .algebra import ContractError


@dataclass(frozen=True)
class PathGrid:
    n_steps: int

    def __post_init__(self):
        n = int(self.n_steps)
        if n < 1 or n & (n - 1):
            raise ContractError(f"n_steps must be a power of two, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) / self.n_steps

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) / self.n_steps

    def index_of(self, t: float) -> int:
        j = t * self.n_steps
        if abs(j - round(j)) > 1e-9 or not 0 <= round(j) <= self.n_steps:
            raise ContractError(f"time {t} is not on the grid with {self.n_steps} steps")
        return int(round(j))


def _cumulative(steps: np.ndarray) -> np.ndarray:
    zero = np.zeros(steps.shape[:-2] + (1, steps.shape[-1]))
    return np.concatenate([zero, np.cumsum(steps, axis=-2)], axis=-2)


@dataclass(frozen=True, eq=False)
class BrownianPath:
    grid: PathGrid
    increments: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim < 2 or inc.shape[-2] != self.grid.n_steps:
            raise ContractError(f"increments must have shape (..., {self.grid.n_steps}, k), got {inc.shape}")
        object.__setattr__(self, "increments", inc)

    @property
    def k(self) -> int:
        return self.increments.shape[-1]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.increments.shape[:-2]

    @property
    def values(self) -> np.ndarray:
        return _cumulative(self.increments)

    def __getitem__(self, idx) -> "BrownianPath":
        return BrownianPath(self.grid, self.increments[idx])


@dataclass(frozen=True, eq=False)
class CameronMartinPath:
    grid: PathGrid
    slopes: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.slopes, dtype=float)
        if s.ndim != 2 or s.shape[0] != self.grid.n_steps:
            raise ContractError(f"slopes must have shape ({self.grid.n_steps}, k), got {s.shape}")
        object.__setattr__(self, "slopes", s)

    @property
    def k(self) -> int:
        return self.slopes.shape[-1]

    @property
    def values(self) -> np.ndarray:
        return _cumulative(self.slopes * self.grid.dt)

    @property
    def increments(self) -> np.ndarray:
        return self.slopes * self.grid.dt

    @classmethod
    def from_slope_function(cls, grid: PathGrid, hdot: Callable[[np.ndarray], np.ndarray]) -> "CameronMartinPath":
        """Sample ``hdot(t) -> (len(t), k)`` at cell midpoints."""
        return cls(grid, np.asarray(hdot(grid.midpoints), dtype=float))


def _same(grid_a: PathGrid, grid_b: PathGrid, k_a: int, k_b: int):
    if grid_a.n_steps != grid_b.n_steps:
        raise ContractError(f"grid mismatch: {grid_a.n_steps} vs {grid_b.n_steps} steps")
    if k_a != k_b:
        raise ContractError(f"dimension mismatch: k={k_a} vs k={k_b}")


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(path_index)]))


def sample_increments(grid: PathGrid, k: int, seed: int, path_indices: Sequence[int]) -> np.ndarray:
    """Increments ``(len(path_indices), n_steps, k)``; row ``r`` depends only on ``(seed, path_indices[r])``."""
    out = np.empty((len(path_indices), grid.n_steps, k))
    scale = np.sqrt(grid.dt)
    for r, idx in enumerate(path_indices):
        out[r] = path_rng(seed, idx).standard_normal((grid.n_steps, k)) * scale
    return out


def sample_brownian(grid: PathGrid, k: int, seed: int, path_index: int) -> BrownianPath:
    return BrownianPath(grid, sample_increments(grid, k, seed, [path_index])[0])


def sample_brownian_batch(grid: PathGrid, k: int, seed: int, path_indices: Sequence[int]) -> BrownianPath:
    return BrownianPath(grid, sample_increments(grid, k, seed, path_indices))


def coarsen(omega: BrownianPath, factor: int) -> BrownianPath:
    """The same Brownian path seen on a grid ``factor`` times coarser (dyadic coupling)."""
    n = omega.grid.n_steps
    if factor < 1 or n % factor:
        raise ContractError(f"cannot coarsen {n} steps by {factor}")
    inc = omega.increments.reshape(omega.batch_shape + (n // factor, factor, omega.k)).sum(axis=-2)
    return BrownianPath(PathGrid(n // factor), inc)


def cm_inner(h: CameronMartinPath, g: CameronMartinPath) -> float:
    _same(h.grid, g.grid, h.k, g.k)
    return float(np.sum(h.slopes * g.slopes) * h.grid.dt)


def energy(h: CameronMartinPath) -> float:
    return cm_inner(h, h)


def shift_path(omega: BrownianPath, h: CameronMartinPath, eps: float) -> BrownianPath:
    _same(omega.grid, h.grid, omega.k, h.k)
    return BrownianPath(omega.grid, omega.increments + eps * h.increments)


def wiener_integral(h: CameronMartinPath, omega: BrownianPath) -> np.ndarray:
    """Left-point sum ``sum_j hdot_j . db_j`` (batched over ``omega``)."""
    _same(omega.grid, h.grid, omega.k, h.k)
    return np.einsum("...jk,jk->...", omega.increments, h.slopes)


@dataclass(frozen=True, eq=False)
class CylinderFunctional:
    """``F(omega) = f(omega_{t_1}, ..., omega_{t_n})``.

    ``f`` and ``grad`` act on arrays ``(..., n, k)`` of path values at
    ``times``; ``grad`` returns partials of the same shape.
    """

    times: tuple[float, ...]
    f: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray] | None
    name: str = "F"

    def __post_init__(self):
        ts = tuple(float(t) for t in self.times)
        if any(not 0 < t <= 1 for t in ts) or any(a >= b for a, b in zip(ts, ts[1:])):
            raise ContractError(f"cylinder times must satisfy 0 < t_1 < ... <= 1, got {ts}")
        object.__setattr__(self, "times", ts)

    def indices(self, grid: PathGrid) -> list[int]:
        return [grid.index_of(t) for t in self.times]

    def sample_points(self, values: np.ndarray, grid: PathGrid) -> np.ndarray:
        return values[..., self.indices(grid), :]

    def __call__(self, omega: BrownianPath) -> np.ndarray:
        return np.asarray(self.f(self.sample_points(omega.values, omega.grid)), dtype=float)


def cylinder_partial(F: CylinderFunctional, h: CameronMartinPath, omega: BrownianPath) -> np.ndarray:
    """``sum_i grad^i f(omega_{t_1}, ...) . h_{t_i}``."""
    if F.grad is None:
        raise ContractError(f"cylinder functional {F.name!r} has no partial derivatives")
    _same(omega.grid, h.grid, omega.k, h.k)
    pts = F.sample_points(omega.values, omega.grid)
    hs = F.sample_points(h.values, h.grid)
    return np.einsum("...nk,nk->...", np.asarray(F.grad(pts), dtype=float), hs)


def dh_star(G: CylinderFunctional, h: CameronMartinPath, omega: BrownianPath) -> np.ndarray:
    """Adjoint ``-d_h G + G * int hdot . db`` evaluated pathwise."""
    return -cylinder_partial(G, h, omega) + G(omega) * wiener_integral(h, omega)


def export_csv(path: str | Path, omega: BrownianPath) -> None:
    """Write ``t, b1..bk`` for a single (unbatched) path."""
    if omega.batch_shape:
        raise ContractError("export_csv takes a single path")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"b{i + 1}" for i in range(omega.k)])
        for t, row in zip(omega.grid.times, omega.values):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
