"""Euler-Maruyama Monte Carlo for Black-Scholes and Ornstein-Uhlenbeck paths."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import rng

__all__ = [
    "TimeGrid",
    "BsParams",
    "OuParams",
    "PathBatch",
    "SimulationError",
    "PathFormatError",
    "euler_step",
    "simulate_bs",
    "simulate_ou",
    "closed_form_moments",
    "Moments",
]


class SimulationError(FloatingPointError):
    pass


class PathFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    t0: float = 0.0
    maturity: float = 0.25
    n_steps: int = 30

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be positive, got {self.n_steps}")
        if not self.maturity > self.t0:
            raise ValueError(f"maturity {self.maturity} must exceed t0 {self.t0}")

    @property
    def dt(self) -> float:
        return (self.maturity - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def normalized_times(self) -> np.ndarray:
        """Dates mapped to [0, 1]; this is the time input the networks see."""
        return np.arange(self.n_steps + 1) / self.n_steps


@dataclass(frozen=True)
class BsParams:
    r: float = 0.8
    sigma: float | tuple = 0.3
    x0: float | tuple = 0.2
    corr: np.ndarray | None = None

    @property
    def dim(self) -> int:
        if self.corr is not None:
            return int(np.asarray(self.corr).shape[0])
        return int(np.size(self.x0)) if np.ndim(self.x0) else int(np.size(self.sigma))


@dataclass(frozen=True)
class OuParams:
    theta: float = 7.0
    mu: float = 0.6
    sigma: float = 0.1
    x0: float = 0.2

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError(f"OU theta must be positive, got {self.theta}")
        if self.sigma < 0:
            raise ValueError(f"OU sigma must be non-negative, got {self.sigma}")


@dataclass
class PathBatch:
    """Sampled paths, ``values[m, i, j]`` = sample m, date t_i, coordinate j."""

    values: np.ndarray
    grid: TimeGrid = field(default_factory=TimeGrid)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3:
            raise ValueError(f"PathBatch values must be (M, N+1, d), got shape {v.shape}")
        if v.shape[1] != self.grid.n_steps + 1:
            raise ValueError(f"PathBatch has {v.shape[1]} dates but grid has {self.grid.n_steps + 1}")
        self.values = v

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n_dates(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def check(self) -> None:
        """Raise if the batch is not pinned at a common start or is non-finite."""
        if not np.all(np.isfinite(self.values)):
            raise SimulationError("PathBatch contains non-finite values")
        if not np.all(self.values[:, 0, :] == self.values[0, 0, :]):
            raise SimulationError("PathBatch initial values differ across samples")

    # -- binary format ----------------------------------------------------
    MAGIC = b"EGPATHS\0"
    VERSION = 1

    def to_bytes(self) -> bytes:
        header = self.MAGIC + struct.pack("<IIII", self.VERSION, self.m, self.n_dates, self.dim)
        header += struct.pack("<ddI", self.grid.t0, self.grid.maturity, self.grid.n_steps)
        return header + self.values.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, buf: bytes) -> "PathBatch":
        head = len(cls.MAGIC) + 16 + 20
        if len(buf) < head or buf[:len(cls.MAGIC)] != cls.MAGIC:
            raise PathFormatError("not a PathBatch file")
        version, m, n_dates, dim = struct.unpack_from("<IIII", buf, len(cls.MAGIC))
        if version != cls.VERSION:
            raise PathFormatError(f"PathBatch version {version}, expected {cls.VERSION}")
        t0, maturity, n_steps = struct.unpack_from("<ddI", buf, len(cls.MAGIC) + 16)
        body = buf[head:]
        if len(body) != 8 * m * n_dates * dim:
            raise PathFormatError("PathBatch file truncated or oversized")
        values = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(m, n_dates, dim)
        return cls(values, TimeGrid(t0, maturity, n_steps))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "PathBatch":
        return cls.from_bytes(Path(path).read_bytes())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample", "date"] + [f"value_{j}" for j in range(self.dim)])
            for s in range(self.m):
                for i in range(self.n_dates):
                    w.writerow([s, i] + [repr(float(x)) for x in self.values[s, i]])

    @classmethod
    def from_csv(cls, path, grid: TimeGrid | None = None) -> "PathBatch":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:2] != ["sample", "date"]:
            raise PathFormatError(f"{path}: missing 'sample,date,...' header")
        data = np.array([[float(x) for x in r] for r in rows[1:]])
        m = int(data[:, 0].max()) + 1
        n_dates = int(data[:, 1].max()) + 1
        dim = data.shape[1] - 2
        values = np.empty((m, n_dates, dim))
        values[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2:]
        grid = grid or TimeGrid(0.0, 0.25, n_dates - 1)
        return cls(values, grid)


def euler_step(x, t: float, b: Callable, sigma: Callable, z, dt: float) -> np.ndarray:
    """One Euler-Maruyama step ``x + b(t, x) dt + sigma(t, x) z`` with z ~ N(0, dt I).

    ``x`` is ``(..., d)``; ``sigma`` returns ``(..., d, d)``.
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    vol = np.asarray(sigma(t, x), dtype=np.float64)
    return x + np.asarray(b(t, x)) * dt + np.einsum("...ij,...j->...i", vol, z)


def _rollout(x0: np.ndarray, grid: TimeGrid, m: int, seed: int, b, sigma) -> PathBatch:
    d = x0.shape[0]
    dt = grid.dt
    z = rng.gaussian_paths(seed, m, grid.n_steps, d) * np.sqrt(dt)
    out = np.empty((m, grid.n_steps + 1, d))
    out[:, 0, :] = x0
    x = np.broadcast_to(x0, (m, d)).copy()
    times = grid.times
    for i in range(grid.n_steps):
        with np.errstate(over="ignore", invalid="ignore"):  # blow-ups are reported below
            x = euler_step(x, times[i], b, sigma, z[:, i, :], dt)
        bad = ~np.all(np.isfinite(x), axis=1)
        if bad.any():
            raise SimulationError(
                f"non-finite state at t={times[i + 1]:.6g} (date {i + 1}), sample {int(np.argmax(bad))}")
        out[:, i + 1, :] = x
    return PathBatch(out, grid)


def _check_corr(corr: np.ndarray) -> np.ndarray:
    corr = np.asarray(corr, dtype=np.float64)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise ValueError(f"correlation must be square, got {corr.shape}")
    if not np.allclose(corr, corr.T, atol=1e-12):
        raise ValueError("correlation matrix is not symmetric")
    if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
        raise ValueError("correlation matrix must have unit diagonal")
    eig = np.linalg.eigvalsh(corr)
    if eig.min() < -1e-10:
        raise ValueError(f"correlation matrix is not positive semi-definite (min eigenvalue {eig.min():.3g})")
    return corr


def _psd_factor(corr: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        # singular PSD: fall back to a symmetric square-root factor
        w, v = np.linalg.eigh(corr)
        return v * np.sqrt(np.clip(w, 0, None))


def simulate_bs(params: BsParams, grid: TimeGrid, m: int, seed: int) -> PathBatch:
    """Euler paths of dX = r X dt + sigma X dW (correlated across coordinates)."""
    if m < 1:
        raise ValueError(f"batch size must be >= 1, got {m}")
    d = params.dim
    corr = np.eye(d) if params.corr is None else _check_corr(params.corr)
    if corr.shape[0] != d:
        raise ValueError(f"correlation is {corr.shape[0]}x{corr.shape[0]} but process has dimension {d}")
    chol = _psd_factor(corr)
    sig = np.broadcast_to(np.asarray(params.sigma, dtype=np.float64), (d,))
    if np.any(sig < 0):
        raise ValueError("BS sigma must be non-negative")
    x0 = np.broadcast_to(np.asarray(params.x0, dtype=np.float64), (d,)).copy()
    r = params.r
    vol_factor = sig[:, None] * chol

    def drift(t, x):
        return r * x

    def vol(t, x):
        return x[..., :, None] * vol_factor

    return _rollout(x0, grid, m, seed, drift, vol)


def simulate_ou(params: OuParams, grid: TimeGrid, m: int, seed: int) -> PathBatch:
    """Euler paths of dX = theta (mu - X) dt + sigma dW in one dimension."""
    if m < 1:
        raise ValueError(f"batch size must be >= 1, got {m}")
    if params.theta * grid.dt >= 2.0:
        raise ValueError(f"theta*dt = {params.theta * grid.dt:.3g} >= 2: explicit Euler is unstable")
    th, mu, s = params.theta, params.mu, params.sigma

    def drift(t, x):
        return th * (mu - x)

    def vol(t, x):
        return np.full(x.shape + (1,), s)

    return _rollout(np.array([float(params.x0)]), grid, m, seed, drift, vol)


@dataclass
class Moments:
    times: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    euler_mean: np.ndarray
    euler_var: np.ndarray


def closed_form_moments(params, grid: TimeGrid) -> Moments:
    """Exact continuous-time and Euler-scheme mean/variance at every date (1-d)."""
    t = grid.times - grid.t0
    i = np.arange(grid.n_steps + 1)
    dt = grid.dt
    if isinstance(params, BsParams):
        if params.dim != 1:
            raise ValueError("closed-form moments only for 1-d Black-Scholes")
        x0 = float(np.ravel(params.x0)[0])
        r, s = params.r, float(np.ravel(params.sigma)[0])
        mean = x0 * np.exp(r * t)
        var = x0 ** 2 * np.exp(2 * r * t) * np.expm1(s * s * t)
        e_mean = x0 * (1 + r * dt) ** i
        e_var = x0 ** 2 * ((1 + r * dt) ** 2 + s * s * dt) ** i - e_mean ** 2
        return Moments(grid.times, mean, var, e_mean, e_var)
    if isinstance(params, OuParams):
        th, mu, s, x0 = params.theta, params.mu, params.sigma, params.x0
        mean = mu + (x0 - mu) * np.exp(-th * t)
        var = s * s * (-np.expm1(-2 * th * t)) / (2 * th)
        a = 1 - th * dt
        e_mean = mu + (x0 - mu) * a ** i
        if abs(a) == 1.0:
            e_var = s * s * dt * i
        else:
            e_var = s * s * dt * (1 - a ** (2 * i)) / (1 - a * a)
        return Moments(grid.times, mean, var, e_mean, e_var)
    raise TypeError(f"unsupported process parameters {type(params).__name__}")
