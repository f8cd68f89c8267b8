"""Training loop for the conditional Euler generator."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .. import adcore as ad
from .. import rng
from ..eulergen import EulerGenerator
from ..sources import DataSource, state_scaling
from .loss import CollapseError, evaluate_plan, plan_cells
from .partition import KMeansPartition, PartitionSpec, build_kmeans_partition

log = logging.getLogger(__name__)

# seed tags for the per-iteration random streams
REAL_TAG, NOISE_TAG, INIT_TAG, KMEANS_TAG, SCALE_TAG = 1, 2, 3, 4, 7


class TrainingError(RuntimeError):
    """Training aborted; the message names the iteration."""


class StagnationWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 5000
    batch: int = 300
    lr: float = 1e-3
    partition: PartitionSpec = PartitionSpec()
    seed: int = 0
    hidden: tuple[int, ...] | None = None
    activation: str = "tanh"
    kmeans_sample: int = 2000  # real paths used to fit k-means centers
    standardize: bool = True  # feed standardized states to the networks

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch < 2:
            raise ValueError(f"batch must be >= 2, got {self.batch}")
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    generator: EulerGenerator
    losses: list[float] = field(default_factory=list)
    optimizer: ad.Adam | None = None
    kmeans: KMeansPartition | None = None
    iterations: int = 0


def _stagnant(losses: list[float], window: int = 1000) -> bool:
    if len(losses) < 2 * window:
        return False
    recent = np.mean(losses[-window:])
    before = np.mean(losses[-2 * window:-window])
    return recent >= before


def train_cegen(source: DataSource, config: TrainConfig = TrainConfig(), *,
                generator: EulerGenerator | None = None, optimizer: ad.Adam | None = None,
                start_iteration: int = 0, callback: Callable[[int, EulerGenerator, float], None] | None = None,
                kmeans_part: KMeansPartition | None = None) -> TrainResult:
    """Minimize the conditional loss between ``source`` batches and generator rollouts.

    Passing ``generator``/``optimizer`` continues an earlier run (used for
    transfer); ``start_iteration`` offsets the per-iteration seeds so a
    continued run does not replay the same noise. ``callback(it, gen, loss)``
    is invoked after every update.
    """
    if generator is None:
        shift = scale = None
        if config.standardize:
            shift, scale = state_scaling(source, rng.derive(config.seed, SCALE_TAG))
        generator = EulerGenerator.init(source.dim, source.grid, source.x0, rng.derive(config.seed, INIT_TAG),
                                        config.hidden, config.activation, shift, scale)
    elif generator.dim != source.dim:
        raise ad.ShapeError(f"generator has d={generator.dim} but data has d={source.dim}")
    generator.metadata.setdefault("model", "cegen")
    if optimizer is None:
        optimizer = ad.Adam(generator.parameters(), config.lr)
    spec = config.partition
    if spec.mode == "kmeans" and kmeans_part is None:
        sample = source.batch(config.kmeans_sample, rng.derive(config.seed, KMEANS_TAG))
        kmeans_part = build_kmeans_partition(sample, spec.k, rng.derive(config.seed, KMEANS_TAG, 1))

    losses: list[float] = []
    warned = False
    tape = ad.Tape()
    for step in range(config.iterations):
        it = start_iteration + step
        real = source.batch(config.batch, rng.derive(config.seed, REAL_TAG, it))
        # as many generated as real paths, so small-sample bias is the same on both sides
        noise = generator.noise(real.shape[0], rng.derive(config.seed, NOISE_TAG, it))
        tape.reset()
        try:
            with tape:
                path = generator.rollout(noise)
                gen_v = np.stack([p.value for p in path], axis=1)
                if not np.all(np.isfinite(gen_v)):
                    raise TrainingError(f"iteration {it}: generator produced non-finite states")
                plan = plan_cells(real, gen_v, spec, kmeans_part)
                loss = evaluate_plan(plan, path)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(f"iteration {it}: loss is {value}")
            optimizer.zero_grad()
            tape.backward(loss)
            optimizer.step()
        except ad.NonFiniteGradientError as exc:
            raise TrainingError(f"iteration {it}: {exc}") from None
        except (ValueError, CollapseError) as exc:
            raise TrainingError(f"iteration {it}: {exc}") from exc
        losses.append(value)
        if callback is not None:
            callback(it, generator, value)
        if not warned and (step + 1) % 1000 == 0 and _stagnant(losses):
            warnings.warn(f"conditional loss did not decrease over iterations {it - 999}..{it}",
                          StagnationWarning, stacklevel=2)
            warned = True
        if (step + 1) % 500 == 0:
            log.info("cegen iteration %d loss %.6g", it + 1, value)
    meta = generator.metadata
    meta["iterations"] = int(meta.get("iterations", 0)) + config.iterations
    meta["seed"] = config.seed
    meta["config"] = config.to_dict()
    return TrainResult(generator, losses, optimizer, kmeans_part, config.iterations)
