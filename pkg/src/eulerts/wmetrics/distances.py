"""Gaussian summaries, matrix square roots and Bures / W2 / Hellinger distances.

Functions accept plain arrays or tape tensors. Array inputs are evaluated with
an exact eigendecomposition square root unless ``method="ns"`` is requested;
tensor inputs always go through the differentiable Newton-Schulz iteration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .. import adcore as ad
from ..adcore import Tensor

REG = 1e-6


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass
class GaussianSummary:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return int(np.shape(self.mean)[-1])


def empirical_summary(points, reg: float = REG) -> GaussianSummary:
    """Mean and 1/M covariance of an (M, d) cloud, symmetrized, plus ``reg * I``."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError(f"empirical_summary needs at least 2 points, got {x.shape[0]}")
    mu = x.mean(axis=0)
    c = x - mu
    cov = c.T @ c / x.shape[0]
    cov = 0.5 * (cov + cov.T) + reg * np.eye(x.shape[1])
    return GaussianSummary(mu, cov)


def sqrtm_eig(a: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix (batched)."""
    a = np.asarray(a, dtype=np.float64)
    w, v = np.linalg.eigh(0.5 * (a + np.swapaxes(a, -1, -2)))
    w = np.sqrt(np.clip(w, 0.0, None))
    return (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)


def newton_schulz_sqrt(a, iters: int = 15, tol: float = 1e-5):
    """Coupled Newton-Schulz square root and inverse square root.

    ``a`` is scaled by its Frobenius norm, iterated ``iters`` times and
    rescaled. Batched over leading axes. Returns ``(sqrt, inv_sqrt)`` in the
    input's kind (array or Tensor). A :class:`ConvergenceWarning` is emitted
    when the relative residual exceeds ``tol``.
    """
    as_array = not isinstance(a, Tensor)
    a = ad.as_tensor(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ad.ShapeError(f"newton_schulz_sqrt: expected square matrices, got {a.shape}")
    n = a.shape[-1]
    eye = np.broadcast_to(np.eye(n), a.shape)
    norm = ad.sqrt(ad.sum_(ad.square(a), axis=(-2, -1), keepdims=True))
    y = ad.div(a, norm)
    z = Tensor(eye)
    for _ in range(iters):
        t = ad.scalar_mul(ad.sub(3.0 * eye, ad.matmul(z, y)), 0.5)
        y, z = ad.matmul(y, t), ad.matmul(t, z)
    root_norm = ad.sqrt(norm)
    s = ad.mul(y, root_norm)
    s_inv = ad.div(z, root_norm)
    resid = _ns_residual(s.value, a.value)
    if np.any(resid > tol):
        warnings.warn(f"Newton-Schulz did not converge: residual {resid.max():.2e} > {tol:.0e}",
                      ConvergenceWarning, stacklevel=2)
    if as_array:
        return s.value, s_inv.value
    return s, s_inv


def _ns_residual(s: np.ndarray, a: np.ndarray) -> np.ndarray:
    num = np.linalg.norm(s @ s - a, axis=(-2, -1))
    den = np.linalg.norm(a, axis=(-2, -1))
    return num / np.where(den > 0, den, 1.0)


def ns_residual(a, iters: int = 15) -> float:
    """Relative residual ||S S - A||_F / ||A||_F after ``iters`` iterations."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        s, _ = newton_schulz_sqrt(np.asarray(a, dtype=np.float64), iters=iters)
    return float(np.max(_ns_residual(s, np.asarray(a, dtype=np.float64))))


def _check_pair(a, b, name):
    sa, sb = np.shape(a.value if isinstance(a, Tensor) else a), np.shape(b.value if isinstance(b, Tensor) else b)
    if len(sa) < 2 or sa[-1] != sa[-2] or sa[-2:] != sb[-2:]:
        raise ad.ShapeError(f"{name}: dimension mismatch {sa} vs {sb}")


def bures_sq(a, b, method: str = "auto", iters: int = 15):
    """Tr A + Tr B - 2 Tr (A^1/2 B A^1/2)^1/2, clamped at zero.

    With two arrays and ``method="auto"`` the roots are exact (eigh). If either
    input is a Tensor the value is a Tensor differentiable through
    Newton-Schulz; a constant ``a`` still has its root taken exactly.
    """
    _check_pair(a, b, "bures_sq")
    taped = isinstance(a, Tensor) or isinstance(b, Tensor)
    if not taped and method in ("auto", "eig"):
        ra = sqrtm_eig(a)
        inner = sqrtm_eig(ra @ np.asarray(b) @ ra)
        val = np.trace(a, axis1=-2, axis2=-1) + np.trace(b, axis1=-2, axis2=-1) \
            - 2.0 * np.trace(inner, axis1=-2, axis2=-1)
        return np.maximum(val, 0.0)
    if isinstance(a, Tensor):
        ra, _ = newton_schulz_sqrt(a, iters)
    else:
        ra = Tensor(sqrtm_eig(a))
    b = ad.as_tensor(b)
    a = ad.as_tensor(a)
    inner, _ = newton_schulz_sqrt(ad.matmul(ad.matmul(ra, b), ra), iters)
    val = ad.sub(ad.add(ad.trace(a), ad.trace(b)), ad.scalar_mul(ad.trace(inner), 2.0))
    if not taped:
        return np.maximum(val.value, 0.0)
    # clamp without killing the gradient where the value is positive
    return ad.mul(val, Tensor((val.value > 0).astype(np.float64)))


def gaussian_w2_sq(g1: GaussianSummary, g2: GaussianSummary, method: str = "auto"):
    """||m1 - m2||^2 + Bures^2(C1, C2)."""
    if np.shape(_val(g1.mean))[-1] != np.shape(_val(g2.mean))[-1]:
        raise ad.ShapeError(f"gaussian_w2_sq: dimension mismatch {np.shape(_val(g1.mean))} vs {np.shape(_val(g2.mean))}")
    bures = bures_sq(g1.cov, g2.cov, method=method)
    if isinstance(bures, Tensor) or isinstance(g1.mean, Tensor) or isinstance(g2.mean, Tensor):
        diff = ad.sub(g1.mean, g2.mean)
        return ad.add(ad.sum_(ad.square(diff), axis=-1), bures)
    diff = np.asarray(g1.mean) - np.asarray(g2.mean)
    return np.sum(diff * diff, axis=-1) + bures


def _val(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x)


def hellinger(a, b, atol: float = 1e-8) -> float:
    """||A^1/2 - B^1/2||_F for trace-one positive matrices."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_pair(a, b, "hellinger")
    for name, m in (("a", a), ("b", b)):
        tr = np.trace(m)
        if abs(tr - 1.0) > atol:
            raise ValueError(f"hellinger: {name} must have unit trace, got {tr:.12g}")
    return float(np.linalg.norm(sqrtm_eig(a) - sqrtm_eig(b)))
