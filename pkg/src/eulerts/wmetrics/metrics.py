"""Path-batch comparison metrics: marginal FID, quadratic variation,
correlation and envelope errors."""

from __future__ import annotations

import warnings

import numpy as np

from .distances import REG, gaussian_w2_sq, empirical_summary

CORR_EPS = 1e-12
ENVELOPE_KEYS = ("avg", "q05", "q95", "min", "max")


class DegenerateCorrelationWarning(RuntimeWarning):
    pass


def _values(batch) -> np.ndarray:
    v = np.asarray(getattr(batch, "values", batch), dtype=np.float64)
    if v.ndim == 2:
        v = v[:, :, None]
    if v.ndim != 3:
        raise ValueError(f"expected (M, N+1, d) paths, got shape {v.shape}")
    return v


def _pair(real, gen) -> tuple[np.ndarray, np.ndarray]:
    r, g = _values(real), _values(gen)
    if r.shape[1:] != g.shape[1:]:
        raise ValueError(f"grid/dimension mismatch: real {r.shape[1:]} vs generated {g.shape[1:]}")
    rg, gg = getattr(real, "grid", None), getattr(gen, "grid", None)
    if rg is not None and gg is not None and rg != gg:
        raise ValueError(f"time grids differ: {rg} vs {gg}")
    return r, g


def fid_avg(real, gen, reg: float = REG) -> float:
    """Average over dates of the Gaussian W2^2 between marginal clouds."""
    r, g = _pair(real, gen)
    vals = [gaussian_w2_sq(empirical_summary(r[:, i], reg), empirical_summary(g[:, i], reg))
            for i in range(r.shape[1])]
    return float(np.mean(vals))


def qvar_curve(batch) -> np.ndarray:
    """Batch-mean cumulative quadratic variation, summed over dimensions, per date."""
    v = _values(batch)
    inc = np.diff(v, axis=1) ** 2
    qv = np.concatenate([np.zeros((v.shape[0], 1)), np.cumsum(inc.sum(axis=2), axis=1)], axis=1)
    return qv.mean(axis=0)


def qvar_mse(real, gen) -> float:
    r, g = _pair(real, gen)
    return float(np.mean((qvar_curve(r) - qvar_curve(g)) ** 2))


def correlation_curve(batch, eps: float = CORR_EPS) -> tuple[np.ndarray, list[int]]:
    """(N, d, d) correlation of marginals at dates 1..N and the dates that needed
    regularized standard deviations. The pinned initial date is excluded."""
    v = _values(batch)[:, 1:, :]
    c = v - v.mean(axis=0)
    cov = np.einsum("mni,mnj->nij", c, c) / v.shape[0]
    std = np.sqrt(np.einsum("nii->ni", cov))
    flagged = [int(i) + 1 for i in np.flatnonzero((std < eps).any(axis=1))]
    std = np.maximum(std, eps)
    return cov / (std[:, :, None] * std[:, None, :]), flagged


def corr_mse(real, gen) -> float:
    """Entrywise MSE between the time-averaged correlation matrices."""
    r, g = _pair(real, gen)
    if r.shape[2] < 2:
        raise ValueError("corr_mse needs d >= 2")
    cr, fr = correlation_curve(r)
    cg, fg = correlation_curve(g)
    if fr or fg:
        warnings.warn(f"zero-variance coordinates at dates real={fr} generated={fg}; std regularized",
                      DegenerateCorrelationWarning, stacklevel=2)
    return float(np.mean((cr.mean(axis=0) - cg.mean(axis=0)) ** 2))


def envelope_curves(batch) -> dict[str, np.ndarray]:
    """Per-date (N+1, d) curves of mean, 5%/95% quantiles, min and max."""
    v = _values(batch)
    return {
        "avg": v.mean(axis=0),
        "q05": np.quantile(v, 0.05, axis=0, method="linear"),
        "q95": np.quantile(v, 0.95, axis=0, method="linear"),
        "min": v.min(axis=0),
        "max": v.max(axis=0),
    }


def envelope_mse(real, gen) -> dict[str, float]:
    r, g = _pair(real, gen)
    er, eg = envelope_curves(r), envelope_curves(g)
    return {k: float(np.mean((er[k] - eg[k]) ** 2)) for k in ENVELOPE_KEYS}
