"""Support partitions used to extract conditional next-state clouds."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .. import rng


@dataclass(frozen=True)
class PartitionSpec:
    mode: str = "quantile"
    k: int = 10
    lam: float = 1.0
    min_cell: int = 5

    def __post_init__(self):
        if self.mode not in ("quantile", "kmeans"):
            raise ValueError(f"unknown partition mode {self.mode!r}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.min_cell < 2:
            raise ValueError(f"min_cell must be >= 2, got {self.min_cell}")


@dataclass
class ConditionalCell:
    date: int
    dim: int | None  # quantile mode
    cluster: int | None  # kmeans mode
    real_idx: np.ndarray
    gen_idx: np.ndarray
    real_interval: tuple[float, float] | None = None
    gen_interval: tuple[float, float] | None = None

    @property
    def overlaps(self) -> bool:
        if self.real_interval is None or self.gen_interval is None:
            return True
        (a0, a1), (b0, b1) = self.real_interval, self.gen_interval
        return a0 <= b1 and b0 <= a1


def _as_cloud(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def effective_k(k: int, m_real: int, m_gen: int, min_cell: int) -> int:
    """Largest k' <= k leaving at least ``min_cell`` samples per cell on both sides."""
    return max(1, min(k, m_real // min_cell, m_gen // min_cell))


def quantile_labels(prev: np.ndarray, k: int) -> np.ndarray:
    """Equal-count rank cells along the sample axis.

    ``prev`` is (..., M, d); returns int labels of the same shape. Dimensions
    with zero spread at a date collapse to a single cell.
    """
    m = prev.shape[-2]
    ranks = np.argsort(np.argsort(prev, axis=-2, kind="stable"), axis=-2, kind="stable")
    labels = (ranks * k) // m
    flat = np.ptp(prev, axis=-2, keepdims=True) == 0
    return np.where(flat, 0, labels)


def build_quantile_partition(real_prev, gen_prev, k: int, min_cell: int = 2,
                             date: int = 0) -> list[ConditionalCell]:
    """Per-dimension rank cells on each cloud, paired by rank."""
    real_prev = _as_cloud(real_prev)
    gen_prev = _as_cloud(gen_prev)
    k = effective_k(k, real_prev.shape[0], gen_prev.shape[0], min_cell)
    lr = quantile_labels(real_prev, k)
    lg = quantile_labels(gen_prev, k)
    cells = []
    for j in range(real_prev.shape[1]):
        for c in range(k):
            ri = np.flatnonzero(lr[:, j] == c)
            gi = np.flatnonzero(lg[:, j] == c)
            if ri.size == 0 and gi.size == 0:
                continue
            rint = (float(real_prev[ri, j].min()), float(real_prev[ri, j].max())) if ri.size else None
            gint = (float(gen_prev[gi, j].min()), float(gen_prev[gi, j].max())) if gi.size else None
            cells.append(ConditionalCell(date, j, None, ri, gi, rint, gint))
    return cells


@dataclass
class KMeansPartition:
    """Cluster centers per date, fitted once on real previous states."""

    centers: list[np.ndarray]  # one (k_i, d) array per transition date
    degenerate: list[bool]

    def labels(self, date: int, prev: np.ndarray) -> np.ndarray:
        c = self.centers[date]
        d2 = ((prev[:, None, :] - c[None, :, :]) ** 2).sum(axis=-1)
        return np.argmin(d2, axis=1)

    @property
    def k(self) -> int:
        return max(c.shape[0] for c in self.centers)


def kmeans(points: np.ndarray, k: int, seed: int, tol: float = 1e-6, max_rounds: int = 100):
    """Lloyd's algorithm with k-means++ seeding; empty clusters are re-seeded
    from the point farthest from its center. Returns ``(centers, degenerate)``."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    m = x.shape[0]
    distinct = np.unique(x, axis=0)
    degenerate = False
    if k >= distinct.shape[0]:
        if k > 1:
            warnings.warn(f"k-means: k={k} >= {distinct.shape[0]} distinct points; every point is a center",
                          RuntimeWarning, stacklevel=2)
            degenerate = True
        return distinct.copy(), degenerate
    g = rng.numpy_rng(seed, 0x6B6D)
    centers = [x[g.integers(m)]]
    for _ in range(1, k):
        d2 = np.min(((x[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        p = d2 / d2.sum()
        centers.append(x[g.choice(m, p=p)])
    centers = np.array(centers)
    for _ in range(max_rounds):
        d2 = ((x[:, None, :] - centers[None]) ** 2).sum(-1)
        lab = np.argmin(d2, axis=1)
        new = centers.copy()
        for c in range(k):
            members = x[lab == c]
            if members.size:
                new[c] = members.mean(axis=0)
            else:
                far = int(np.argmax(d2[np.arange(m), lab]))
                new[c] = x[far]
                lab[far] = c
        shift = np.max(np.linalg.norm(new - centers, axis=1))
        centers = new
        if shift < tol:
            break
    return centers, degenerate


def build_kmeans_partition(real_paths, k: int, seed: int) -> KMeansPartition:
    """Fit k centers on the real previous states of every transition date.

    ``real_paths`` is (M, N+1, d); centers are fitted for dates 0..N-1.
    """
    x = np.asarray(real_paths, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    centers, flags = [], []
    for i in range(x.shape[1] - 1):
        with warnings.catch_warnings():
            # dates with a single distinct state (t0) are expected to collapse
            if np.ptp(x[:, i, :]) == 0:
                warnings.simplefilter("ignore", RuntimeWarning)
            c, degen = kmeans(x[:, i, :], k, rng.derive(seed, i))
        centers.append(c)
        flags.append(degen)
    return KMeansPartition(centers, flags)
