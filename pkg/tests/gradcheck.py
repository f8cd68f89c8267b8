"""Central finite-difference gradient checks shared by unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from eulerts import adcore as ad


def _away_from_zero(g, shape, margin=0.2):
    x = g.uniform(margin, 1.5, size=shape)
    return x * g.choice([-1.0, 1.0], size=shape)


def _positive(g, shape):
    return g.uniform(0.3, 2.0, size=shape)


def _normal(g, shape):
    return g.normal(size=shape)


def _case(g):
    """op name -> (input arrays, function of tensors)."""
    a, b = int(g.integers(1, 4)), int(g.integers(1, 4))
    c = int(g.integers(1, 4))
    mlp = ad.Mlp.init(3, 2, [4], g, "tanh")
    critic = ad.Mlp.init(3, 1, [4], g, "tanh")
    x_fixed = _normal(g, (a, 3))

    def penalty_wrt_params(w1, b1, w2, b2):
        net = ad.Mlp([ad.Layer(w1, b1, "tanh"), ad.Layer(w2, b2, "identity")])
        return ad.mlp_input_grad(net, x_fixed)[1]

    idx = g.integers(0, a, size=3)
    return {
        "matmul": ([_normal(g, (a, b)), _normal(g, (b, c))], lambda x, y: ad.matmul(x, y)),
        "matmul_batched": ([_normal(g, (2, a, b)), _normal(g, (2, b, c))], lambda x, y: ad.matmul(x, y)),
        "add": ([_normal(g, (a, b)), _normal(g, (b,))], lambda x, y: ad.add(x, y)),
        "sub": ([_normal(g, (a, 1)), _normal(g, (a, b))], lambda x, y: ad.sub(x, y)),
        "mul": ([_normal(g, (a, b)), _normal(g, (a, b))], lambda x, y: ad.mul(x, y)),
        "div": ([_normal(g, (a, b)), _away_from_zero(g, (b,))], lambda x, y: ad.div(x, y)),
        "scalar_mul": ([_normal(g, (a, b))], lambda x: ad.scalar_mul(x, 1.7)),
        "tanh": ([_normal(g, (a, b))], ad.tanh),
        "relu": ([_away_from_zero(g, (a, b))], ad.relu),
        "sigmoid": ([_normal(g, (a, b))], ad.sigmoid),
        "square": ([_normal(g, (a, b))], ad.square),
        "sqrt": ([_positive(g, (a, b))], ad.sqrt),
        "exp": ([_normal(g, (a, b))], ad.exp),
        "log": ([_positive(g, (a, b))], ad.log),
        "abs": ([_away_from_zero(g, (a, b))], ad.abs_),
        "mean": ([_normal(g, (a, b))], lambda x: ad.mean(x, axis=0)),
        "sum": ([_normal(g, (a, b, c))], lambda x: ad.sum_(x, axis=(0, 2), keepdims=True)),
        "trace": ([_normal(g, (2, b, b))], ad.trace),
        "transpose": ([_normal(g, (a, b))], ad.transpose),
        "reshape": ([_normal(g, (a, b))], lambda x: ad.reshape(x, (b, a))),
        "concat": ([_normal(g, (a, b)), _normal(g, (c, b))], lambda x, y: ad.concat([x, y], axis=0)),
        "stack": ([_normal(g, (a, b)), _normal(g, (a, b))], lambda x, y: ad.stack([x, y], axis=1)),
        "slice": ([_normal(g, (a, b))], lambda x: ad.slice_(x, (slice(None), slice(0, 1)))),
        "slice_fancy": ([_normal(g, (a, b))], lambda x: ad.slice_(x, idx)),
        "mlp_forward": ([_normal(g, (a, 3))], lambda x: ad.mlp_forward(mlp, x)),
        "mlp_input_grad": ([_normal(g, (a, 3))], lambda x: ad.mlp_input_grad(critic, x)[1]),
        "mlp_input_grad_params": ([_normal(g, (3, 4)), _normal(g, (4,)), _normal(g, (4, 1)), _normal(g, (1,))],
                                  penalty_wrt_params),
    }


OP_KINDS = tuple(_case(np.random.default_rng(0)).keys())


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_op(kind: str, seed: int, h: float = 1e-6) -> float:
    """Max relative error over inputs of reverse-mode vs central differences."""
    g = np.random.default_rng(seed)
    arrays, fn = _case(g)[kind]
    probe = None

    def scalar(values):
        nonlocal probe
        out = fn(*[ad.Tensor(v, requires_grad=True) for v in values])
        if probe is None:
            probe = g.normal(size=out.shape)
        return float(np.sum(out.value * probe))

    scalar(arrays)  # fixes the probe shape
    inputs = [ad.Tensor(v.copy(), requires_grad=True) for v in arrays]
    tape = ad.Tape()
    with tape:
        out = fn(*inputs)
        loss = ad.sum_(ad.mul(out, probe))
    grads = tape.backward(loss)
    worst = 0.0
    for k, t in enumerate(inputs):
        num = np.zeros_like(t.value)
        for i in np.ndindex(t.shape):
            plus = [v.copy() for v in arrays]
            minus = [v.copy() for v in arrays]
            plus[k][i] += h
            minus[k][i] -= h
            num[i] = (scalar(plus) - scalar(minus)) / (2 * h)
        worst = max(worst, relative_error(grads[t], num))
    return worst
