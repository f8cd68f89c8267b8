"""Conditional Bures-Wasserstein loss between transition distributions.

All cells of all dates are evaluated in one batched pass: membership is
encoded as constant averaging matrices, so the tape cost does not grow with
the number of cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import adcore as ad
from ..adcore import Tensor
from ..wmetrics.distances import REG, newton_schulz_sqrt, sqrtm_eig
from .partition import KMeansPartition, PartitionSpec, effective_k, quantile_labels


class CollapseError(RuntimeError):
    """Every conditional cell at some date is empty."""


@dataclass
class CellPlan:
    """Constant part of one loss evaluation; arrays are indexed (date, cell, ...)."""

    gen_weights: np.ndarray  # (N, J, Mg) averaging weights over generated samples
    real_mean: np.ndarray  # (N, J, d) next-state means
    real_cov: np.ndarray  # (N, J, d, d) regularized next-state covariances
    real_root: np.ndarray  # (N, J, d, d)
    real_prev_mean: np.ndarray  # (N, J)
    prev_selector: np.ndarray  # (J, d) one-hot of the conditioning dimension
    w2_mask: np.ndarray  # (N, J)
    mean_mask: np.ndarray
    penalty_mask: np.ndarray
    counts: tuple[np.ndarray, np.ndarray]  # real, gen members (N, J)

    @property
    def n_cells(self) -> int:
        return int(((self.counts[0] > 0) & (self.counts[1] > 0)).sum())


def _onehot(labels: np.ndarray, k: int) -> np.ndarray:
    return (labels[..., None] == np.arange(k)).astype(np.float64)


def _cell_weights(onehot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(N, M, J) membership -> (N, J, M) averaging matrix and (N, J) counts."""
    w = np.swapaxes(onehot, 1, 2)
    counts = w.sum(axis=2)
    return w / np.where(counts > 0, counts, 1.0)[..., None], counts


def _moments(w: np.ndarray, nxt: np.ndarray, reg: float):
    mean = w @ nxt
    d = nxt.shape[-1]
    second = w @ (nxt[..., :, None] * nxt[..., None, :]).reshape(nxt.shape[:-1] + (d * d,))
    cov = second.reshape(second.shape[:-1] + (d, d)) - mean[..., :, None] * mean[..., None, :]
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2)) + reg * np.eye(d)
    return mean, cov


def _interval_overlap(real_prev, gen_prev, oh_r, oh_g):
    """Per (date, cell) closed-interval overlap of conditioning coordinates."""
    big = np.inf
    r_lo = np.where(oh_r > 0, real_prev, big).min(axis=1)
    r_hi = np.where(oh_r > 0, real_prev, -big).max(axis=1)
    g_lo = np.where(oh_g > 0, gen_prev, big).min(axis=1)
    g_hi = np.where(oh_g > 0, gen_prev, -big).max(axis=1)
    return (r_lo <= g_hi) & (g_lo <= r_hi)


def plan_quantile(real: np.ndarray, gen: np.ndarray, spec: PartitionSpec, reg: float = REG) -> CellPlan:
    """Cells for per-dimension quantile conditioning (real and gen split separately)."""
    n = real.shape[1] - 1
    d = real.shape[2]
    k = effective_k(spec.k, real.shape[0], gen.shape[0], spec.min_cell)
    rp = np.swapaxes(real[:, :-1, :], 0, 1)  # (N, Mr, d)
    gp = np.swapaxes(gen[:, :-1, :], 0, 1)
    rn = np.swapaxes(real[:, 1:, :], 0, 1)
    # (N, M, d, k) -> (N, M, d*k): cell index J = j*k + c
    oh_r = _onehot(quantile_labels(rp, k), k).reshape(n, real.shape[0], d * k)
    oh_g = _onehot(quantile_labels(gp, k), k).reshape(n, gen.shape[0], d * k)
    wr, cr = _cell_weights(oh_r)
    wg, cg = _cell_weights(oh_g)
    selector = np.repeat(np.eye(d), k, axis=0)  # (J, d)
    # conditioning coordinate of each sample for each cell column
    rp_sel = rp @ selector.T  # (N, Mr, J)
    gp_sel = gp @ selector.T
    overlap = _interval_overlap(rp_sel, gp_sel, oh_r, oh_g)
    r_mean, r_cov = _moments(wr, rn, reg)
    real_prev_mean = np.einsum("njm,nmj->nj", wr, rp_sel)
    return _finish(wg, cr, cg, r_mean, r_cov, real_prev_mean, selector, overlap, spec)


def plan_kmeans(real: np.ndarray, gen: np.ndarray, part: KMeansPartition, spec: PartitionSpec,
                reg: float = REG) -> CellPlan:
    """Cells given by nearest fitted center of the joint previous state."""
    n = real.shape[1] - 1
    d = real.shape[2]
    k = part.k
    lr = np.stack([part.labels(i, real[:, i, :]) for i in range(n)])  # (N, Mr)
    lg = np.stack([part.labels(i, gen[:, i, :]) for i in range(n)])
    wr, cr = _cell_weights(_onehot(lr, k))
    wg, cg = _cell_weights(_onehot(lg, k))
    rn = np.swapaxes(real[:, 1:, :], 0, 1)
    r_mean, r_cov = _moments(wr, rn, reg)
    selector = np.zeros((k, d))
    overlap = np.ones((n, k), dtype=bool)
    return _finish(wg, cr, cg, r_mean, r_cov, np.zeros((n, k)), selector, overlap, spec)


def _finish(wg, cr, cg, r_mean, r_cov, real_prev_mean, selector, overlap, spec) -> CellPlan:
    both = (cr > 0) & (cg > 0)
    dead = ~both.any(axis=1)
    if dead.any():
        raise CollapseError(f"every conditional cell is empty at date {int(np.argmax(dead))}")
    big = (cr >= spec.min_cell) & (cg >= spec.min_cell)
    w2_mask = both & overlap & big
    mean_mask = both & overlap & ~big
    penalty_mask = both & ~overlap
    return CellPlan(wg, r_mean, r_cov, sqrtm_eig(r_cov), real_prev_mean, selector,
                    w2_mask.astype(float), mean_mask.astype(float), penalty_mask.astype(float) * spec.lam,
                    (cr, cg))


def plan_cells(real: np.ndarray, gen: np.ndarray, spec: PartitionSpec,
               kmeans_part: KMeansPartition | None = None) -> CellPlan:
    if spec.mode == "quantile":
        return plan_quantile(real, gen, spec)
    if kmeans_part is None:
        raise ValueError("kmeans mode needs a fitted KMeansPartition")
    return plan_kmeans(real, gen, kmeans_part, spec)


def evaluate_plan(plan: CellPlan, path: list[Tensor] | Tensor, iters: int = 15, reg: float = REG) -> Tensor:
    """Differentiable sum of per-cell terms for a generated rollout."""
    if isinstance(path, Tensor):
        steps = [path[:, i, :] for i in range(path.shape[1])]
    else:
        steps = list(path)
    nxt = ad.stack(steps[1:], axis=0)  # (N, Mg, d)
    prv = ad.stack(steps[:-1], axis=0)
    n, mg, d = nxt.shape
    wg = Tensor(plan.gen_weights)
    g_mean = ad.matmul(wg, nxt)  # (N, J, d)
    diff = ad.sub(g_mean, plan.real_mean)
    mean_term = ad.sum_(ad.square(diff), axis=-1)  # (N, J)
    if d == 1:
        g_second = ad.matmul(wg, ad.square(nxt))
        g_cov = ad.add(ad.sub(g_second, ad.square(g_mean)), reg)[..., None]  # (N, J, 1, 1)
    else:
        outer = ad.reshape(ad.mul(ad.reshape(nxt, (n, mg, d, 1)), ad.reshape(nxt, (n, mg, 1, d))), (n, mg, d * d))
        g_second = ad.reshape(ad.matmul(wg, outer), (n, -1, d, d))
        gm_outer = ad.mul(ad.reshape(g_mean, (n, -1, d, 1)), ad.reshape(g_mean, (n, -1, 1, d)))
        g_cov = ad.add(ad.sub(g_second, gm_outer), reg * np.eye(d))
        g_cov = ad.scalar_mul(ad.add(g_cov, ad.transpose(g_cov)), 0.5)
    ra = Tensor(plan.real_root)
    inner = ad.matmul(ad.matmul(ra, g_cov), ra)
    root, _ = newton_schulz_sqrt(inner, iters)
    bures = ad.sub(ad.add(ad.trace(g_cov), np.trace(plan.real_cov, axis1=-2, axis2=-1)),
                   ad.scalar_mul(ad.trace(root), 2.0))
    w2 = ad.add(mean_term, bures)
    total = ad.add(ad.sum_(ad.mul(w2, plan.w2_mask)), ad.sum_(ad.mul(mean_term, plan.mean_mask)))
    if plan.penalty_mask.any():
        g_prev = ad.sum_(ad.mul(ad.matmul(wg, prv), plan.prev_selector), axis=-1)  # (N, J)
        gap = ad.abs_(ad.sub(g_prev, plan.real_prev_mean))
        total = ad.add(total, ad.sum_(ad.mul(gap, plan.penalty_mask)))
    return total


def conditional_loss(real, gen, spec: PartitionSpec = PartitionSpec(),
                     kmeans_part: KMeansPartition | None = None) -> Tensor:
    """Sum over dates and cells of conditional Gaussian W2 (with disjoint-support penalty).

    ``real`` is an array or PathBatch (Mr, N+1, d); ``gen`` is a PathBatch,
    array, per-date tensor list (as returned by ``EulerGenerator.rollout``)
    or a (Mg, N+1, d) Tensor.
    """
    real_v = getattr(real, "values", real)
    real_v = np.asarray(real_v, dtype=np.float64)
    if isinstance(gen, list):
        gen_path = gen
        gen_v = np.stack([t.value for t in gen], axis=1)
    else:
        gen_v = gen.value if isinstance(gen, Tensor) else np.asarray(getattr(gen, "values", gen), dtype=np.float64)
        gen_path = gen if isinstance(gen, Tensor) else Tensor(gen_v)
    if real_v.shape[1:] != gen_v.shape[1:]:
        raise ad.ShapeError(f"conditional_loss: real {real_v.shape} and generated {gen_v.shape} grids differ")
    plan = plan_cells(real_v, gen_v, spec, kmeans_part)
    return evaluate_plan(plan, gen_path)
