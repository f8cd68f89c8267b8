"""Adversarial Euler generators: a single W1 critic (EWGAN) or temporal plus
marginal critics (EDGAN), both regularized with a gradient penalty."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import adcore as ad
from . import rng
from .adcore import Mlp, Tensor
from .eulergen import EulerGenerator
from .sources import DataSource, state_scaling

log = logging.getLogger(__name__)

REAL_TAG, NOISE_TAG, INIT_TAG, GP_TAG, CRITIC_INIT_TAG, SCALE_TAG = 1, 2, 3, 5, 6, 7


class TrainingError(RuntimeError):
    pass


@dataclass
class Critic:
    """Scalar-output network. ``time_input`` critics take (t/T, x) and the
    penalty only looks at the gradient with respect to x."""

    net: Mlp
    time_input: bool = False

    def __call__(self, x) -> Tensor:
        return self.net(x)

    def parameters(self) -> list[Tensor]:
        return self.net.parameters()

    @classmethod
    def temporal(cls, dim: int, n_steps: int, seed: int, hidden=None, activation: str = "tanh") -> "Critic":
        width = dim * n_steps
        hidden = [4 * width] * 3 if hidden is None else list(hidden)
        return cls(Mlp.init(width, 1, hidden, rng.numpy_rng(seed, 0x7C), activation))

    @classmethod
    def marginal(cls, dim: int, seed: int, hidden=None, activation: str = "tanh") -> "Critic":
        hidden = [4 * dim] * 3 if hidden is None else list(hidden)
        return cls(Mlp.init(1 + dim, 1, hidden, rng.numpy_rng(seed, 0x7D), activation), time_input=True)


def temporal_inputs(paths) -> np.ndarray | Tensor:
    """Flatten dates t_1..t_N of (M, N+1, d) paths (array or per-date tensor list) to (M, N*d)."""
    if isinstance(paths, list):
        return ad.concat(paths[1:], axis=1)
    v = np.asarray(paths, dtype=np.float64)
    return v[:, 1:, :].reshape(v.shape[0], -1)


def marginal_inputs(state, t_norm: float) -> np.ndarray | Tensor:
    """(M, d) states at one date -> (M, 1 + d) critic inputs."""
    m = state.shape[0]
    col = np.full((m, 1), float(t_norm))
    if isinstance(state, Tensor):
        return ad.concat([Tensor(col), state], axis=1)
    return np.concatenate([col, np.asarray(state, dtype=np.float64)], axis=1)


def _check_pair(real, gen):
    rs = real.shape if hasattr(real, "shape") else np.shape(real)
    gs = gen.shape if hasattr(gen, "shape") else np.shape(gen)
    if tuple(rs) != tuple(gs):
        raise ad.ShapeError(f"critic batches differ in shape: real {tuple(rs)} vs generated {tuple(gs)}")


def w1_dual_estimate(critic: Critic, real, gen) -> Tensor:
    """Mean critic output on ``real`` minus mean on ``gen`` (rows are samples)."""
    _check_pair(real, gen)
    return ad.sub(ad.mean(critic(real)), ad.mean(critic(gen)))


def gradient_penalty(critic: Critic, real, gen, seed: int) -> Tensor:
    """Mean of (||grad_x critic(u x + (1-u) y)|| - 1)^2 with u ~ U(0, 1) per pair."""
    _check_pair(real, gen)
    x = real.value if isinstance(real, Tensor) else np.asarray(real, dtype=np.float64)
    y = gen.value if isinstance(gen, Tensor) else np.asarray(gen, dtype=np.float64)
    u = rng.numpy_rng(seed).uniform(size=(x.shape[0], 1))
    interp = u * x + (1.0 - u) * y
    _, grad = ad.mlp_input_grad(critic.net, interp)
    if critic.time_input:
        grad = grad[:, 1:]
    norm = ad.sqrt(ad.sum_(ad.square(grad), axis=1))
    return ad.mean(ad.square(ad.sub(norm, 1.0)))


def critic_step(critic: Critic, opt: ad.Adam, real, gen, gp_coef: float, seed: int) -> float:
    """One ascent step on dual estimate - gp_coef * penalty. Returns the dual estimate."""
    tape = ad.Tape()
    with tape:
        dual = w1_dual_estimate(critic, real, gen)
        loss = ad.scalar_mul(dual, -1.0)
        if gp_coef > 0:
            loss = ad.add(loss, ad.scalar_mul(gradient_penalty(critic, real, gen, seed), gp_coef))
    opt.zero_grad()
    tape.backward(loss)
    opt.step()
    return dual.item()


@dataclass(frozen=True)
class GanConfig:
    iterations: int = 5000
    batch: int = 300
    n_critic: int = 5
    gp_coef: float = 10.0
    lr_gen: float = 1e-3
    lr_critic: float = 1e-3
    seed: int = 0
    hidden: tuple[int, ...] | None = None
    activation: str = "tanh"
    standardize: bool = True

    def __post_init__(self):
        if self.n_critic < 1:
            raise ValueError(f"n_critic must be >= 1, got {self.n_critic}")
        if self.gp_coef < 0:
            raise ValueError(f"gp_coef must be >= 0, got {self.gp_coef}")
        if self.iterations < 0 or self.batch < 2:
            raise ValueError("iterations must be >= 0 and batch >= 2")
        if not (self.lr_gen >= 0 and self.lr_critic >= 0):
            raise ValueError("learning rates must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GanResult:
    generator: EulerGenerator
    critic: Critic
    marginal_critic: Critic | None = None
    critic_losses: list[float] = field(default_factory=list)
    gen_losses: list[float] = field(default_factory=list)

    def extra_nets(self) -> dict[str, Mlp]:
        nets = {"critic": self.critic.net}
        if self.marginal_critic is not None:
            nets["marginal_critic"] = self.marginal_critic.net
        return nets


def _gen_values(gen: EulerGenerator, m: int, seed: int) -> np.ndarray:
    return gen.sample_values(gen.noise(m, seed))


def _train_gan(source: DataSource, config: GanConfig, dual: bool, generator: EulerGenerator | None,
               callback: Callable | None) -> GanResult:
    s = config.seed
    if generator is None:
        shift = scale = None
        if config.standardize:
            shift, scale = state_scaling(source, rng.derive(s, SCALE_TAG))
        generator = EulerGenerator.init(source.dim, source.grid, source.x0, rng.derive(s, INIT_TAG),
                                        config.hidden, config.activation, shift, scale)
    generator.metadata.setdefault("model", "edgan" if dual else "ewgan")
    d, n = source.dim, source.grid.n_steps
    critic = Critic.temporal(d, n, rng.derive(s, CRITIC_INIT_TAG), activation=config.activation)
    c_opt = ad.Adam(critic.parameters(), config.lr_critic)
    marg = m_opt = None
    if dual:
        marg = Critic.marginal(d, rng.derive(s, CRITIC_INIT_TAG, 1), activation=config.activation)
        m_opt = ad.Adam(marg.parameters(), config.lr_critic)
    g_opt = ad.Adam(generator.parameters(), config.lr_gen)
    tn = source.grid.normalized_times()
    result = GanResult(generator, critic, marg)
    m = config.batch
    for it in range(config.iterations):
        try:
            est = 0.0
            for j in range(config.n_critic):
                real = source.batch(m, rng.derive(s, REAL_TAG, it, j))
                fake = _gen_values(generator, real.shape[0], rng.derive(s, NOISE_TAG, it, j))
                if not np.all(np.isfinite(fake)):
                    raise TrainingError(f"iteration {it}: generator produced non-finite states")
                est = critic_step(critic, c_opt, temporal_inputs(real), temporal_inputs(fake),
                                  config.gp_coef, rng.derive(s, GP_TAG, it, j))
                if dual:
                    for i in range(1, n + 1):
                        critic_step(marg, m_opt, marginal_inputs(real[:, i], tn[i]),
                                    marginal_inputs(fake[:, i], tn[i]), config.gp_coef,
                                    rng.derive(s, GP_TAG, it, j, i))
            tape = ad.Tape()
            with tape:
                path = generator.rollout(generator.noise(m, rng.derive(s, NOISE_TAG, it, config.n_critic)))
                g_loss = ad.scalar_mul(ad.mean(critic(temporal_inputs(path))), -1.0)
                if dual:
                    for i in range(1, n + 1):
                        g_loss = ad.sub(g_loss, ad.mean(marg(marginal_inputs(path[i], tn[i]))))
            value = g_loss.item()
            if not (np.isfinite(value) and np.isfinite(est)):
                raise TrainingError(f"iteration {it}: non-finite loss (generator {value}, critic {est})")
            g_opt.zero_grad()
            tape.backward(g_loss)
            g_opt.step()
        except ad.NonFiniteGradientError as exc:
            raise TrainingError(f"iteration {it}: {exc}") from None
        result.critic_losses.append(est)
        result.gen_losses.append(value)
        if callback is not None:
            callback(it, generator, value)
        if (it + 1) % 500 == 0:
            log.info("%s iteration %d critic %.4g generator %.4g", generator.metadata["model"], it + 1, est, value)
    # critics hold gradients from the generator pass; drop them
    for p in critic.parameters() + (marg.parameters() if marg else []):
        p.grad = None
    meta = generator.metadata
    meta["iterations"] = int(meta.get("iterations", 0)) + config.iterations
    meta["seed"] = s
    meta["config"] = config.to_dict()
    return result


def train_ewgan(source: DataSource, config: GanConfig = GanConfig(), generator: EulerGenerator | None = None,
                callback: Callable | None = None) -> GanResult:
    """Single temporal critic on full sequences, gradient-penalized."""
    return _train_gan(source, config, False, generator, callback)


def train_edgan(source: DataSource, config: GanConfig = GanConfig(), generator: EulerGenerator | None = None,
                callback: Callable | None = None) -> GanResult:
    """Temporal critic plus a time-conditioned marginal critic updated date by date."""
    return _train_gan(source, config, True, generator, callback)
