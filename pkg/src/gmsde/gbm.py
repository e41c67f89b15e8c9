"""Discrete G-Brownian paths under a fixed volatility control.

Increments use a counter-based generator: the Gaussian draw for step ``k``
of component ``j`` is a pure function of (path key, k, j), so paths are
reproducible regardless of generation order or thread count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.special import ndtri

from .gexp import VolatilityBand, VolatilityControl

__all__ = [
    "TimeGrid",
    "GPath",
    "PathBatch",
    "path_key",
    "counter_normals",
    "sample_path",
    "sample_batch",
    "qv_band_check",
    "coarsen",
    "write_path_csv",
]

Seed = Union[int, Sequence[int]]

_TWO_M53 = 2.0**-53


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError("horizon must be positive and finite")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        # k*step, with the last point pinned to the horizon
        t = np.arange(self.n_steps + 1) * self.step
        t[-1] = self.horizon
        return t

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.horizon, self.n_steps * factor)


def path_key(seed: Seed) -> np.ndarray:
    """128-bit Philox key derived from an integer or a tuple of integers."""
    entropy = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    return np.random.SeedSequence(entropy).generate_state(2, np.uint64)


def counter_normals(key: np.ndarray, n: int, start: int = 0) -> np.ndarray:
    """Standard normals for counters ``start .. start+n-1`` under ``key``.

    Draw ``i`` is the inverse normal CDF of the 53 high bits of the i-th
    64-bit Philox output, so it depends only on (key, i).
    """
    bitgen = np.random.Philox(key=key)
    block, offset = divmod(start, 4)
    if block:
        bitgen.advance(block)
    raw = bitgen.random_raw(n + offset)[offset:]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53
    return ndtri(u)


@dataclass(frozen=True)
class GPath:
    """One realisation of (B, <B>) on a grid.

    ``b`` has shape (n_steps+1, dim); ``qv`` has shape (n_steps+1,).
    """

    grid: TimeGrid
    b: np.ndarray
    qv: np.ndarray
    control_index: int = 0
    path_seed: Seed = 0

    @property
    def dim(self) -> int:
        return self.b.shape[1]

    @property
    def db(self) -> np.ndarray:
        return np.diff(self.b, axis=0)

    @property
    def dqv(self) -> np.ndarray:
        return np.diff(self.qv)

    def as_batch(self) -> "PathBatch":
        return PathBatch(self.grid, self.db[None], self.dqv, self.control_index, (self.path_seed,))


@dataclass(frozen=True)
class PathBatch:
    """Increments of many paths under one control.

    ``db`` has shape (n_paths, n_steps, dim).  The quadratic variation is
    control-deterministic, so ``dqv`` (n_steps,) is shared by all paths.
    """

    grid: TimeGrid
    db: np.ndarray
    dqv: np.ndarray
    control_index: int = 0
    seeds: tuple = ()

    @property
    def n_paths(self) -> int:
        return self.db.shape[0]

    @property
    def dim(self) -> int:
        return self.db.shape[2]

    @property
    def b(self) -> np.ndarray:
        out = np.zeros((self.n_paths, self.grid.n_steps + 1, self.dim))
        np.cumsum(self.db, axis=1, out=out[:, 1:])
        return out

    @property
    def qv(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.dqv)])

    def path(self, i: int) -> GPath:
        seed = self.seeds[i] if self.seeds else i
        return GPath(self.grid, self.b[i], self.qv, self.control_index, seed)


def _check_cover(control: VolatilityControl, grid: TimeGrid) -> None:
    if control.horizon < grid.horizon * (1 - 1e-12):
        raise ValueError(
            f"control covers [0, {control.horizon}] but the grid horizon is {grid.horizon}"
        )


def _rates(control: VolatilityControl, grid: TimeGrid) -> np.ndarray:
    return control.at(grid.times[:-1])


def sample_path(
    control: VolatilityControl,
    grid: TimeGrid,
    seed: Seed,
    dim: int = 1,
    control_index: int = 0,
) -> GPath:
    """Euler path: dB_k = sqrt(rate(t_k) h) xi_k, dqv_k = rate(t_k) h."""
    batch = sample_batch(control, grid, [seed], dim=dim, control_index=control_index)
    return batch.path(0)


def sample_batch(
    control: VolatilityControl,
    grid: TimeGrid,
    seeds: Sequence[Seed],
    dim: int = 1,
    control_index: int = 0,
) -> PathBatch:
    _check_cover(control, grid)
    if dim < 1:
        raise ValueError("dim must be >= 1")
    n = grid.n_steps
    rates = _rates(control, grid)
    scale = np.sqrt(rates * grid.step)
    xi = np.empty((len(seeds), n, dim))
    for i, s in enumerate(seeds):
        xi[i] = counter_normals(path_key(s), n * dim).reshape(n, dim)
    db = xi * scale[None, :, None]
    dqv = rates * grid.step
    return PathBatch(grid, db, dqv, control_index, tuple(seeds))


def qv_band_check(path: GPath, band: VolatilityBand, rtol: float = 1e-12) -> bool:
    """qv[0] == 0, nondecreasing, and inside [lo*t, hi*t] up to ``rtol``."""
    qv = np.asarray(path.qv, dtype=float)
    t = path.grid.times
    if qv.shape != t.shape or not np.all(np.isfinite(qv)):
        return False
    if qv[0] != 0.0 or np.any(np.asarray(path.b)[0] != 0.0):
        return False
    scale = rtol * max(1.0, band.sigma_high_sq * path.grid.horizon)
    if np.any(np.diff(qv) < -scale):
        return False
    lo, hi = band.sigma_low_sq * t, band.sigma_high_sq * t
    return bool(np.all(qv >= lo - scale) and np.all(qv <= hi + scale))


def coarsen(batch: PathBatch, factor: int = 2) -> PathBatch:
    """Sum consecutive increments, giving the same paths on a grid ``factor`` times coarser."""
    n = batch.grid.n_steps
    if n % factor:
        raise ValueError("n_steps must be divisible by factor")
    grid = TimeGrid(batch.grid.horizon, n // factor)
    db = batch.db.reshape(batch.n_paths, n // factor, factor, batch.dim).sum(axis=2)
    dqv = batch.dqv.reshape(n // factor, factor).sum(axis=1)
    return PathBatch(grid, db, dqv, batch.control_index, batch.seeds)


def write_path_csv(path: GPath, dest: Path) -> None:
    """Debug dump with columns t, B (one column per component), QV."""
    dest = Path(dest)
    dest.parent.mkdir(parents=True, exist_ok=True)
    cols = ["t"] + (["B"] if path.dim == 1 else [f"B{j}" for j in range(path.dim)]) + ["QV"]
    with dest.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for t, b, q in zip(path.grid.times, path.b, path.qv):
            w.writerow([format(t, ".17g"), *(format(v, ".17g") for v in b), format(q, ".17g")])
