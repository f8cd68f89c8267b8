"""Deep Euler generator: drift and volatility networks driving an Euler recursion."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import adcore as ad
from . import rng
from .adcore import Layer, Mlp, Tensor
from .sdesim import BsParams, OuParams, PathBatch, SimulationError, TimeGrid

__all__ = [
    "EulerGenerator",
    "generate",
    "affine_generator",
    "ou_generator",
    "bs_generator",
    "extract_bs_params",
    "extract_ou_params",
    "OuEstimate",
    "save_checkpoint",
    "load_checkpoint",
    "load_checkpoint_full",
    "CheckpointError",
    "CorruptCheckpointError",
    "CheckpointVersionError",
    "DimensionMismatchError",
    "EstimationError",
    "config_hash",
]

CHECKPOINT_MAGIC = b"EGCKPT\0\0"
CHECKPOINT_VERSION = 1
# output layers start small so initial drift and volatility do not dwarf the data scale
OUT_GAIN = 0.1


class EstimationError(ValueError):
    pass


@dataclass
class EulerGenerator:
    drift_net: Mlp
    vol_net: Mlp
    grid: TimeGrid
    x0: np.ndarray
    metadata: dict = field(default_factory=dict)
    # states enter the networks as (y - y_shift) / y_scale
    y_shift: np.ndarray | None = None
    y_scale: np.ndarray | None = None

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=np.float64))
        d = self.dim
        self.y_shift = np.zeros(d) if self.y_shift is None else np.broadcast_to(
            np.asarray(self.y_shift, dtype=np.float64), (d,)).copy()
        self.y_scale = np.ones(d) if self.y_scale is None else np.broadcast_to(
            np.asarray(self.y_scale, dtype=np.float64), (d,)).copy()
        if np.any(self.y_scale <= 0):
            raise ValueError("y_scale must be positive")
        if self.drift_net.in_dim != 1 + d or self.vol_net.in_dim != 1 + d:
            raise ad.ShapeError(f"generator nets must take 1+d={1 + d} inputs")
        if self.drift_net.out_dim != d:
            raise ad.ShapeError(f"drift net outputs {self.drift_net.out_dim}, expected d={d}")
        if self.vol_net.out_dim != d * d:
            raise ad.ShapeError(f"vol net outputs {self.vol_net.out_dim}, expected d^2={d * d}")

    @property
    def dim(self) -> int:
        return self.x0.shape[0]

    @classmethod
    def init(cls, dim: int, grid: TimeGrid, x0, seed: int, hidden: Sequence[int] | None = None,
             activation: str = "tanh", y_shift=None, y_scale=None) -> "EulerGenerator":
        """Randomly initialized generator; default 3 hidden layers of width 4*d."""
        hidden = [4 * dim] * 3 if hidden is None else list(hidden)
        g = rng.numpy_rng(seed, 0x6E6E)
        drift = Mlp.init(1 + dim, dim, hidden, g, activation, out_gain=OUT_GAIN)
        vol = Mlp.init(1 + dim, dim * dim, hidden, g, activation, out_gain=OUT_GAIN)
        x0 = np.broadcast_to(np.asarray(x0, dtype=np.float64), (dim,)).copy()
        return cls(drift, vol, grid, x0, {}, y_shift, y_scale)

    def parameters(self) -> list[Tensor]:
        return self.drift_net.parameters() + self.vol_net.parameters()

    def copy(self) -> "EulerGenerator":
        return EulerGenerator(self.drift_net.copy(), self.vol_net.copy(), self.grid,
                              self.x0.copy(), dict(self.metadata), self.y_shift.copy(), self.y_scale.copy())

    # -- evaluation --------------------------------------------------------
    def _inputs(self, t_norm: float, y):
        y = ad.as_tensor(y)
        m = y.shape[0]
        if np.any(self.y_shift != 0) or np.any(self.y_scale != 1):
            y = ad.mul(ad.sub(y, self.y_shift), 1.0 / self.y_scale)
        return ad.concat([Tensor(np.full((m, 1), t_norm)), y], axis=1)

    def coefficients(self, t_norm, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Drift (..., d) and volatility (..., d, d) at normalized time(s) ``t_norm``."""
        y = np.asarray(y, dtype=np.float64)
        lead = y.shape[:-1]
        d = self.dim
        t = np.broadcast_to(np.asarray(t_norm, dtype=np.float64), lead)[..., None]
        inp = np.concatenate([t, (y - self.y_shift) / self.y_scale], axis=-1).reshape(-1, 1 + d)
        b = self.drift_net(inp).value.reshape(lead + (d,))
        s = self.vol_net(inp).value.reshape(lead + (d, d))
        return b, s

    def rollout(self, noise: np.ndarray) -> list[Tensor]:
        """Euler recursion driven by ``noise`` ~ N(0, dt) of shape (m, N, d).

        Returns one (m, d) tensor per date, starting with the pinned x0. Ops
        are recorded when a tape is active.
        """
        m, n_steps, d = noise.shape
        if n_steps != self.grid.n_steps or d != self.dim:
            raise ad.ShapeError(f"noise shape {noise.shape} does not match grid/dim ({self.grid.n_steps}, {d})")
        dt = self.grid.dt
        tn = self.grid.normalized_times()
        y = Tensor(np.broadcast_to(self.x0, (m, d)).copy())
        path = [y]
        for i in range(n_steps):
            inp = self._inputs(tn[i], y)
            b = self.drift_net(inp)
            s = self.vol_net(inp)
            z = noise[:, i, :]
            if d == 1:
                shock = ad.mul(s, z)
            else:
                shock = ad.reshape(ad.matmul(ad.reshape(s, (m, d, d)), z[:, :, None]), (m, d))
            y = ad.add(ad.add(y, ad.scalar_mul(b, dt)), shock)
            path.append(y)
        return path

    def sample_values(self, noise: np.ndarray) -> np.ndarray:
        """Array-only version of ``rollout``: (m, N+1, d) states, nothing recorded."""
        m, n_steps, d = noise.shape
        if n_steps != self.grid.n_steps or d != self.dim:
            raise ad.ShapeError(f"noise shape {noise.shape} does not match grid/dim ({self.grid.n_steps}, {d})")
        dt = self.grid.dt
        tn = self.grid.normalized_times()
        out = np.empty((m, n_steps + 1, d))
        out[:, 0] = self.x0
        for i in range(n_steps):
            y = out[:, i]
            inp = np.concatenate([np.full((m, 1), tn[i]), (y - self.y_shift) * (1.0 / self.y_scale)], axis=1)
            b = ad.mlp_apply(self.drift_net, inp)
            s = ad.mlp_apply(self.vol_net, inp)
            z = noise[:, i, :]
            shock = s * z if d == 1 else (s.reshape(m, d, d) @ z[:, :, None]).reshape(m, d)
            out[:, i + 1] = y + b * dt + shock
        return out

    def noise(self, m: int, seed: int) -> np.ndarray:
        return rng.gaussian_paths(seed, m, self.grid.n_steps, self.dim) * np.sqrt(self.grid.dt)


def affine_generator(grid: TimeGrid, x0: float, drift: tuple[float, float],
                     vol: tuple[float, float]) -> EulerGenerator:
    """1-d generator with exact coefficients b(y) = drift[0] + drift[1]*y and
    sigma(y) = vol[0] + vol[1]*y (no hidden layers)."""
    d_net = Mlp.affine(np.array([[0.0], [drift[1]]]), np.array([drift[0]]))
    v_net = Mlp.affine(np.array([[0.0], [vol[1]]]), np.array([vol[0]]))
    return EulerGenerator(d_net, v_net, grid, np.array([float(x0)]), {"model": "affine"})


def ou_generator(params: OuParams, grid: TimeGrid) -> EulerGenerator:
    return affine_generator(grid, params.x0, (params.theta * params.mu, -params.theta), (params.sigma, 0.0))


def bs_generator(params: BsParams, grid: TimeGrid) -> EulerGenerator:
    if params.dim != 1:
        raise ValueError("bs_generator is 1-d")
    return affine_generator(grid, float(np.ravel(params.x0)[0]), (0.0, params.r),
                            (0.0, float(np.ravel(params.sigma)[0])))


def generate(gen: EulerGenerator, m: int, seed: int) -> PathBatch:
    """Sample ``m`` generator paths (no tape)."""
    if m < 1:
        raise ValueError(f"batch size must be >= 1, got {m}")
    values = gen.sample_values(gen.noise(m, seed))
    bad = ~np.isfinite(values)
    if bad.any():
        s, i, _ = np.argwhere(bad)[0]
        raise SimulationError(f"generator produced a non-finite state at date {i}, sample {s}")
    return PathBatch(values, gen.grid)


def _states(gen: EulerGenerator, m: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(normalized time, state) for every (sample, date) where coefficients are used."""
    batch = generate(gen, m, seed)
    y = batch.values[:, :-1, :]
    tn = np.broadcast_to(gen.grid.normalized_times()[:-1][None, :], y.shape[:2])
    return tn, y


def extract_bs_params(gen: EulerGenerator, m: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Average b(t, y)/y and |sigma(t, y)/y| over generated states (d = 1)."""
    if gen.dim != 1:
        raise EstimationError("Black-Scholes extraction needs d = 1")
    tn, y = _states(gen, m, seed)
    b, s = gen.coefficients(tn, y)
    y, b, s = y.ravel(), b.ravel(), s.ravel()
    keep = np.abs(y) > 1e-6
    if keep.mean() < 0.5:
        raise EstimationError(f"{(~keep).mean():.0%} of states are too close to 0 for ratio estimation")
    return float(np.mean(b[keep] / y[keep])), float(np.mean(np.abs(s[keep] / y[keep])))


@dataclass
class OuEstimate:
    theta: float
    mu: float | None
    sigma: float

    def as_tuple(self):
        return (self.theta, self.mu, self.sigma)


def extract_ou_params(gen: EulerGenerator, m: int = 1000, seed: int = 0) -> OuEstimate:
    """Least squares b ~ alpha + beta*y: theta = -beta, mu = alpha/theta; sigma = mean |sigma|."""
    if gen.dim != 1:
        raise EstimationError("Ornstein-Uhlenbeck extraction needs d = 1")
    tn, y = _states(gen, m, seed)
    b, s = gen.coefficients(tn, y)
    y, b, s = y.ravel(), b.ravel(), s.ravel()
    yc = y - y.mean()
    vy = float(yc @ yc)
    beta = float(yc @ (b - b.mean()) / vy) if vy > 0 else 0.0
    alpha = float(b.mean() - beta * y.mean())
    theta = -beta
    mu = alpha / theta if abs(theta) >= 1e-6 else None
    return OuEstimate(theta, mu, float(np.mean(np.abs(s))))


# -- checkpoints ----------------------------------------------------------


class CheckpointError(ValueError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class DimensionMismatchError(CheckpointError):
    pass


def config_hash(config) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _net_meta(net: Mlp) -> list:
    return [[l.in_dim, l.out_dim, l.activation] for l in net.layers]


def save_checkpoint(gen: EulerGenerator, path, metadata: dict | None = None,
                    extra_nets: dict[str, Mlp] | None = None) -> None:
    extra_nets = extra_nets or {}
    meta = {
        "dim": gen.dim,
        "grid": [gen.grid.t0, gen.grid.maturity, gen.grid.n_steps],
        "x0": gen.x0.tolist(),
        "y_shift": gen.y_shift.tolist(),
        "y_scale": gen.y_scale.tolist(),
        "nets": {"drift": _net_meta(gen.drift_net), "vol": _net_meta(gen.vol_net),
                 **{k: _net_meta(v) for k, v in extra_nets.items()}},
        "metadata": {**gen.metadata, **(metadata or {})},
    }
    meta.setdefault("config_hash", config_hash(meta["metadata"].get("config", {})))
    named = gen.drift_net.named_parameters("drift.") + gen.vol_net.named_parameters("vol.")
    for key, net in extra_nets.items():
        named += net.named_parameters(f"{key}.")
    blob = json.dumps(meta, sort_keys=True).encode()
    body = ad.pack_params([(n, t.value) for n, t in named])
    data = CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(blob)) + blob + body
    Path(path).write_bytes(data)


def load_checkpoint_full(path, expected_dim: int | None = None):
    """Return ``(generator, metadata, extra_nets)``."""
    buf = Path(path).read_bytes()
    head = len(CHECKPOINT_MAGIC) + 8
    if len(buf) < head or buf[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError(f"{path}: not a generator checkpoint")
    version, meta_len = struct.unpack_from("<II", buf, len(CHECKPOINT_MAGIC))
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    try:
        meta = json.loads(buf[head:head + meta_len].decode())
        entries, end = ad.unpack_params(buf, head + meta_len)
    except (ValueError, UnicodeDecodeError) as exc:
        raise CorruptCheckpointError(f"{path}: {exc}") from None
    if end != len(buf):
        raise CorruptCheckpointError(f"{path}: trailing bytes after parameter container")
    if expected_dim is not None and meta["dim"] != expected_dim:
        raise DimensionMismatchError(f"{path}: checkpoint has d={meta['dim']}, experiment expects d={expected_dim}")
    params = dict(entries)
    nets = {}
    for key, layers in meta["nets"].items():
        built = []
        for i, (din, dout, act) in enumerate(layers):
            try:
                w = params[f"{key}.layers.{i}.weight"]
                b = params[f"{key}.layers.{i}.bias"]
            except KeyError as exc:
                raise CorruptCheckpointError(f"{path}: missing parameter {exc}") from None
            if w.shape != (din, dout) or b.shape != (dout,):
                raise CorruptCheckpointError(f"{path}: parameter shape mismatch in {key} layer {i}")
            built.append(Layer(Tensor(w.copy(), requires_grad=True), Tensor(b.copy(), requires_grad=True), act))
        nets[key] = Mlp(built)
    t0, maturity, n_steps = meta["grid"]
    gen = EulerGenerator(nets.pop("drift"), nets.pop("vol"), TimeGrid(t0, maturity, int(n_steps)),
                         np.asarray(meta["x0"]), dict(meta["metadata"]),
                         meta.get("y_shift"), meta.get("y_scale"))
    return gen, meta, nets


def load_checkpoint(path, expected_dim: int | None = None) -> EulerGenerator:
    return load_checkpoint_full(path, expected_dim)[0]
