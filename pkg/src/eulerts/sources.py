"""Real-data sources feeding the trainers one batch per iteration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import rng
from .sdesim import BsParams, OuParams, PathBatch, TimeGrid, simulate_bs, simulate_ou


class DataSource(Protocol):
    grid: TimeGrid
    dim: int
    x0: np.ndarray

    def batch(self, m: int, seed: int) -> np.ndarray:
        """(m', N+1, d) real paths; m' may be smaller than m for finite data."""
        ...


@dataclass
class SimulatorSource:
    """Fresh Monte Carlo paths at every call (unlimited data)."""

    params: BsParams | OuParams
    grid: TimeGrid = TimeGrid()

    @property
    def dim(self) -> int:
        return 1 if isinstance(self.params, OuParams) else self.params.dim

    @property
    def x0(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.params.x0, dtype=np.float64), (self.dim,)).copy()

    def batch(self, m: int, seed: int) -> np.ndarray:
        if isinstance(self.params, OuParams):
            return simulate_ou(self.params, self.grid, m, seed).values
        return simulate_bs(self.params, self.grid, m, seed).values


@dataclass
class ArraySource:
    """A fixed set of sequences sampled without replacement (all of them if m >= n)."""

    paths: PathBatch

    def __post_init__(self):
        self.paths.check()

    @property
    def grid(self) -> TimeGrid:
        return self.paths.grid

    @property
    def dim(self) -> int:
        return self.paths.dim

    @property
    def x0(self) -> np.ndarray:
        return self.paths.values[0, 0, :].copy()

    def batch(self, m: int, seed: int) -> np.ndarray:
        n = self.paths.m
        if m >= n:
            return self.paths.values
        idx = rng.numpy_rng(seed).choice(n, size=m, replace=False)
        return self.paths.values[np.sort(idx)]


def state_scaling(source: DataSource, seed: int, m: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and standard deviation of real states over all dates.

    Generators feed ``(y - mean) / std`` to their networks so the state input
    is not drowned by its offset; zero-spread dimensions keep scale 1.
    """
    v = source.batch(m, seed)
    shift = v.mean(axis=(0, 1))
    scale = v.std(axis=(0, 1))
    return shift, np.where(scale > 0, scale, 1.0)
