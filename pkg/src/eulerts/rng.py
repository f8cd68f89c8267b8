"""Portable counter-based random numbers.

Every draw is a pure function of ``(seed, stream, counter)``::

    key(seed, stream) = mix(mix(seed) XOR mix(stream + STREAM_OFFSET))
    bits(key, c)      = mix(key + GOLDEN * (c + 1))            (mod 2**64)
    u                 = ((bits >> 11) + 0.5) * 2**-53          in (0, 1)

where ``mix`` is the SplitMix64 finalizer::

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

Gaussians come in Box-Muller pairs: normal ``2j`` and ``2j + 1`` of a stream
use uniforms at counters ``2j`` and ``2j + 1``:
``r = sqrt(-2 ln u1)``, ``(r cos 2 pi u2, r sin 2 pi u2)``.

Streams are keyed by sample index, so a batch of M paths is identical whether
it is produced in one call or sample by sample.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MUL1 = np.uint64(0xBF58476D1CE4E5B9)
MUL2 = np.uint64(0x94D049BB133111EB)
STREAM_OFFSET = np.uint64(0xD1B54A32D192ED03)
_MASK = (1 << 64) - 1


def _u64(x) -> np.ndarray:
    if isinstance(x, np.ndarray) and x.dtype == np.uint64:
        return x
    arr = np.asarray(x)
    if arr.dtype.kind in "iu":
        return arr.astype(np.int64).astype(np.uint64) if arr.dtype.kind == "i" else arr.astype(np.uint64)
    return np.asarray([int(v) & _MASK for v in np.ravel(arr)], dtype=np.uint64).reshape(arr.shape)


def mix64(z) -> np.ndarray:
    z = _u64(z)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * MUL1
        z = (z ^ (z >> np.uint64(27))) * MUL2
    return z ^ (z >> np.uint64(31))


def derive(seed: int, *tags: int) -> int:
    """Deterministically derive a child seed from ``seed`` and integer tags."""
    z = mix64(np.uint64(int(seed) & _MASK))
    with np.errstate(over="ignore"):
        for tag in tags:
            z = mix64(z ^ mix64(np.uint64(int(tag) & _MASK) + GOLDEN))
    return int(z)


def stream_keys(seed: int, streams) -> np.ndarray:
    s = _u64(np.asarray(streams))
    with np.errstate(over="ignore"):
        return mix64(mix64(np.uint64(int(seed) & _MASK)) ^ mix64(s + STREAM_OFFSET))


def uniforms(seed: int, streams, n: int) -> np.ndarray:
    """Array (len(streams), n) of uniforms in the open interval (0, 1)."""
    keys = stream_keys(seed, np.atleast_1d(streams))[:, None]
    counters = np.arange(1, n + 1, dtype=np.uint64)[None, :]
    with np.errstate(over="ignore"):
        bits = mix64(keys + GOLDEN * counters)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)


def normals(seed: int, streams, n: int) -> np.ndarray:
    """Array (len(streams), n) of standard normals via Box-Muller."""
    pairs = (n + 1) // 2
    u = uniforms(seed, streams, 2 * pairs)
    u1, u2 = u[:, 0::2], u[:, 1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.empty((u.shape[0], 2 * pairs))
    z[:, 0::2] = r * np.cos(angle)
    z[:, 1::2] = r * np.sin(angle)
    return z[:, :n]


def gaussian_paths(seed: int, m: int, n_steps: int, dim: int, first_sample: int = 0) -> np.ndarray:
    """Standard normals shaped (m, n_steps, dim); sample ``i`` uses stream ``first_sample + i``."""
    streams = np.arange(first_sample, first_sample + m, dtype=np.uint64)
    return normals(seed, streams, n_steps * dim).reshape(m, n_steps, dim)


def numpy_rng(seed: int, *tags: int) -> np.random.Generator:
    """numpy Generator for auxiliary randomness (init, minibatches, bootstraps)."""
    return np.random.Generator(np.random.PCG64(derive(seed, *tags)))
