"""Hand-built path pairs and closed-form oracles shared by unit and acceptance tests."""

from __future__ import annotations

from statistics import NormalDist

import numpy as np

from eulerts import rng


def mirrored_pair(m: int, dt: float = 1.0, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Two (m, 3, 1) path sets with identical marginals but opposite transitions.

    X: X1 = e1, X2 = -X1 + e2.   Y: Y1 = f1, Y2 = Y1 + f2.   e, f ~ N(0, dt).
    """
    e = rng.gaussian_paths(rng.derive(seed, 1), m, 2, 1) * np.sqrt(dt)
    f = rng.gaussian_paths(rng.derive(seed, 2), m, 2, 1) * np.sqrt(dt)
    x = np.zeros((m, 3, 1))
    y = np.zeros((m, 3, 1))
    x[:, 1] = e[:, 0]
    x[:, 2] = -x[:, 1] + e[:, 1]
    y[:, 1] = f[:, 0]
    y[:, 2] = y[:, 1] + f[:, 1]
    return x, y


def mirrored_pair_loss(k: int, dt: float = 1.0) -> float:
    """Population conditional loss of the mirrored pair with k equal-mass cells.

    Within cell c the next states have means -zbar_c and +zbar_c and equal
    variances, so each cell contributes (2 zbar_c)^2, where zbar_c is the
    conditional mean of N(0, dt) on its c-th quantile slice.
    """
    nd = NormalDist()
    edges = [-np.inf] + [nd.inv_cdf(c / k) for c in range(1, k)] + [np.inf]
    pdf = [0.0 if np.isinf(a) else nd.pdf(a) for a in edges]
    zbar = [k * (pdf[c] - pdf[c + 1]) * np.sqrt(dt) for c in range(k)]
    return float(sum((2 * z) ** 2 for z in zbar))


def random_spd(g, n, cond=10.0):
    q, _ = np.linalg.qr(g.normal(size=(n, n)))
    w = np.geomspace(1.0, 1.0 / cond, n) * g.uniform(0.5, 2.0)
    return (q * w) @ q.T


def commuting_pair(g, n):
    q, _ = np.linalg.qr(g.normal(size=(n, n)))
    wa, wb = g.uniform(0.1, 3.0, n), g.uniform(0.1, 3.0, n)
    return (q * wa) @ q.T, (q * wb) @ q.T, q, wa, wb


def trace_one(g, n):
    a = random_spd(g, n, cond=g.uniform(1, 100))
    return a / np.trace(a)
