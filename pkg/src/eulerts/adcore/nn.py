"""Feedforward networks on top of the tape."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

ACTIVATIONS = ("tanh", "relu", "sigmoid", "identity")

_ACT_FN = {
    "tanh": T.tanh,
    "relu": T.relu,
    "sigmoid": T.sigmoid,
    "identity": T.identity,
}


@dataclass
class Layer:
    weight: Tensor  # (in, out)
    bias: Tensor  # (out,)
    activation: str = "identity"

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


@dataclass
class Mlp:
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        for layer in self.layers:
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(
                    f"mlp: layer dimensions do not chain ({prev.out_dim} -> {nxt.in_dim})")

    @classmethod
    def init(cls, in_dim: int, out_dim: int, hidden: Sequence[int],
             rng: np.random.Generator, activation: str = "tanh",
             out_activation: str = "identity", out_gain: float = 1.0) -> "Mlp":
        """Glorot-uniform weights, zero biases; ``out_gain`` scales the output layer weights."""
        dims = [in_dim, *hidden, out_dim]
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            last = i == len(dims) - 2
            if last:
                w *= out_gain
            act = out_activation if last else activation
            layers.append(Layer(Tensor(w, requires_grad=True), Tensor(np.zeros(fan_out), requires_grad=True), act))
        return cls(layers)

    @classmethod
    def affine(cls, weight, bias, activation: str = "identity") -> "Mlp":
        """Single-layer net with the given (in, out) weight and bias."""
        w = np.atleast_2d(np.asarray(weight, dtype=np.float64))
        b = np.atleast_1d(np.asarray(bias, dtype=np.float64))
        return cls([Layer(Tensor(w, requires_grad=True), Tensor(b, requires_grad=True), activation)])

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.append((f"{prefix}layers.{i}.weight", layer.weight))
            out.append((f"{prefix}layers.{i}.bias", layer.bias))
        return out

    def activations(self) -> list[str]:
        return [layer.activation for layer in self.layers]

    def copy(self) -> "Mlp":
        return Mlp([Layer(Tensor(l.weight.value.copy(), requires_grad=True),
                          Tensor(l.bias.value.copy(), requires_grad=True),
                          l.activation) for l in self.layers])

    def __call__(self, x) -> Tensor:
        return mlp_forward(self, x)


def mlp_forward(net: Mlp, x) -> Tensor:
    x = T.as_tensor(x)
    if x.shape[-1] != net.in_dim:
        raise ShapeError(f"mlp_forward: input last dimension {x.shape[-1]} != network input {net.in_dim}")
    h = x
    for layer in net.layers:
        h = _ACT_FN[layer.activation](T.matmul(h, layer.weight) + layer.bias)
    return h


_NP_ACT = {
    "tanh": np.tanh,
    "relu": lambda z: np.where(z > 0, z, 0.0),
    "sigmoid": lambda z: 0.5 * (1.0 + np.tanh(0.5 * z)),
    "identity": lambda z: z,
}


def mlp_apply(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Plain-array forward pass (nothing recorded), same arithmetic as ``mlp_forward``."""
    h = np.asarray(x, dtype=np.float64)
    if h.shape[-1] != net.in_dim:
        raise ShapeError(f"mlp_apply: input last dimension {h.shape[-1]} != network input {net.in_dim}")
    for layer in net.layers:
        h = _NP_ACT[layer.activation](h @ layer.weight.value + layer.bias.value)
    return h


def mlp_input_grad(net: Mlp, x) -> tuple[Tensor, Tensor]:
    """Output and d(sum of outputs)/d(input) for a scalar-output net.

    The input gradient is assembled from ordinary tape ops, so it can itself be
    differentiated with respect to the network parameters (gradient penalty).
    Returns ``(output, grad)`` with grad shaped like ``x``.
    """
    if net.out_dim != 1:
        raise ShapeError(f"mlp_input_grad: expected scalar-output net, got width {net.out_dim}")
    x = T.as_tensor(x)
    h = x
    derivs = []
    for layer in net.layers:
        z = T.matmul(h, layer.weight) + layer.bias
        h = _ACT_FN[layer.activation](z)
        derivs.append(_activation_derivative(layer.activation, z, h))
    # reverse sweep: g_{l-1} = (g_l * act'(z_l)) @ W_l^T
    g = None
    for layer, dact in zip(reversed(net.layers), reversed(derivs)):
        if g is None:
            local = dact if dact is not None else T.Tensor(np.ones(h.shape))
        else:
            local = g if dact is None else T.mul(g, dact)
        g = T.matmul(local, T.transpose(layer.weight))
    return h, g


def _activation_derivative(kind: str, z: Tensor, h: Tensor) -> Tensor | None:
    if kind == "identity":
        return None
    if kind == "tanh":
        return T.sub(1.0, T.square(h))
    if kind == "sigmoid":
        return T.mul(h, T.sub(1.0, h))
    if kind == "relu":
        return T.Tensor((z.value > 0).astype(np.float64))
    raise ValueError(kind)
