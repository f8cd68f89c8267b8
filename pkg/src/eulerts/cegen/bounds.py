"""Audit of the coefficient-error bound implied by a small conditional W2.

For two one-dimensional Euler generators A and B, a regular mesh of width dx
over the union of their supports at each date gives cells I. With
eps = W2(L(A_{t+1} | A_t in I), L(B_{t+1} | B_t in I)) and K the spatial
Lipschitz constant of the coefficients, at the cell center z::

    |b_A(t, z) - b_B(t, z)|  <= (eps + dx) / dt + 2 K dx
    ||s_A(t, z)| - |s_B(t, z)|| <= eps / sqrt(dt) + 2 K dx
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import rng
from ..eulergen import EulerGenerator, generate
from ..wmetrics.distances import empirical_summary, gaussian_w2_sq


@dataclass
class BoundRow:
    date: int
    center: float
    n_a: int
    n_b: int
    eps: float
    eps_se: float
    drift_gap: float
    drift_bound: float
    vol_gap: float
    vol_bound: float

    @property
    def drift_margin(self) -> float:
        return self.drift_bound - self.drift_gap

    @property
    def vol_margin(self) -> float:
        return self.vol_bound - self.vol_gap


@dataclass
class BoundReport:
    rows: list[BoundRow] = field(default_factory=list)
    skipped: int = 0
    lipschitz: float = 0.0
    dx: float = 0.0
    dt: float = 0.0

    @property
    def drift_holds(self) -> bool:
        return all(r.drift_margin >= 0 for r in self.rows)

    @property
    def vol_holds(self) -> bool:
        return all(r.vol_margin >= 0 for r in self.rows)

    @property
    def holds(self) -> bool:
        return self.drift_holds and self.vol_holds

    def min_margins(self) -> tuple[float, float]:
        if not self.rows:
            return float("nan"), float("nan")
        return min(r.drift_margin for r in self.rows), min(r.vol_margin for r in self.rows)


def lipschitz_estimate(gens, grid_points: np.ndarray, t_norm: np.ndarray) -> float:
    """Largest finite-difference slope in y of b and |sigma| over the given points."""
    k = 0.0
    y = np.sort(np.unique(grid_points))
    if y.size < 2:
        return 0.0
    for g in gens:
        for t in t_norm:
            b, s = g.coefficients(np.full(y.size, t), y[:, None])
            dy = np.diff(y)
            k = max(k, np.max(np.abs(np.diff(b[:, 0])) / dy), np.max(np.abs(np.diff(np.abs(s[:, 0, 0]))) / dy))
    return float(k)


def _w2(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(gaussian_w2_sq(empirical_summary(a), empirical_summary(b))))


def coefficient_bound_check(gen_a: EulerGenerator, gen_b: EulerGenerator, dx: float, m: int, seed: int = 0,
                      lipschitz: float | None = None, min_cell: int = 5, n_boot: int = 50,
                      se_mult: float = 1.0) -> BoundReport:
    """Measure per-cell conditional W2 between two generators and check both bounds.

    ``eps`` is inflated by ``se_mult`` bootstrap standard errors before the
    comparison. Cells with fewer than ``min_cell`` samples on either side are
    skipped and counted.
    """
    if gen_a.dim != 1 or gen_b.dim != 1:
        raise ValueError("the coefficient bound audit is implemented for d = 1")
    if gen_a.grid != gen_b.grid:
        raise ValueError("generators must share a time grid")
    if dx <= 0:
        raise ValueError(f"dx must be positive, got {dx}")
    grid = gen_a.grid
    dt = grid.dt
    pa = generate(gen_a, m, rng.derive(seed, 1)).values[:, :, 0]
    pb = generate(gen_b, m, rng.derive(seed, 2)).values[:, :, 0]
    tn = grid.normalized_times()
    if lipschitz is None:
        pts = np.linspace(min(pa.min(), pb.min()), max(pa.max(), pb.max()), 201)
        lipschitz = lipschitz_estimate([gen_a, gen_b], pts, tn[:-1])
    boot = rng.numpy_rng(seed, 3)
    report = BoundReport(lipschitz=lipschitz, dx=dx, dt=dt)
    for i in range(grid.n_steps):
        xa, xb = pa[:, i], pb[:, i]
        lo = min(xa.min(), xb.min())
        hi = max(xa.max(), xb.max())
        n_cells = max(1, int(np.ceil((hi - lo) / dx)))
        ca = np.minimum(((xa - lo) / dx).astype(int), n_cells - 1)
        cb = np.minimum(((xb - lo) / dx).astype(int), n_cells - 1)
        for c in range(n_cells):
            ia, ib = np.flatnonzero(ca == c), np.flatnonzero(cb == c)
            if ia.size == 0 and ib.size == 0:
                continue
            if ia.size < min_cell or ib.size < min_cell:
                report.skipped += 1
                continue
            na, nb = pa[ia, i + 1], pb[ib, i + 1]
            eps = _w2(na, nb)
            reps = [_w2(boot.choice(na, na.size), boot.choice(nb, nb.size)) for _ in range(n_boot)]
            se = float(np.std(reps, ddof=1)) if n_boot > 1 else 0.0
            e = eps + se_mult * se
            z = lo + (c + 0.5) * dx
            ba, sa = gen_a.coefficients(tn[i], np.array([[z]]))
            bb, sb = gen_b.coefficients(tn[i], np.array([[z]]))
            report.rows.append(BoundRow(
                i, float(z), int(ia.size), int(ib.size), eps, se,
                float(abs(ba[0, 0] - bb[0, 0])), (e + dx) / dt + 2 * lipschitz * dx,
                float(abs(abs(sa[0, 0, 0]) - abs(sb[0, 0, 0]))), e / np.sqrt(dt) + 2 * lipschitz * dx))
    return report
