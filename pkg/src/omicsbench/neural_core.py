"""Dense layers, activations, dropout, manual backprop and Adagrad.

Everything is float64 numpy. Weight matrices are stored ``(out, in)`` and a
layer computes ``act(x @ W.T + b)`` followed by inverted dropout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "softmax", "identity")
ADAGRAD_EPS = 1e-10


class ShapeError(ValueError):
    """Raised when array shapes do not line up."""


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """PCG64 generator; identical seeds give identical streams everywhere."""
    return np.random.Generator(np.random.PCG64(seed))


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(row: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along ``axis``."""
    row = np.asarray(row, dtype=np.float64)
    if row.size == 0 or row.shape[axis] == 0:
        raise ValueError("softmax of an empty vector is undefined")
    shifted = row - row.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(dout: np.ndarray, probs: np.ndarray, axis: int = -1) -> np.ndarray:
    return probs * (dout - (dout * probs).sum(axis=axis, keepdims=True))


def glorot_uniform(n_in: int, n_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray
    activation: str = "identity"
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"weights {self.weights.shape} and bias {self.bias.shape} disagree")

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator,
             activation: str = "identity", dropout_rate: float = 0.0) -> "DenseLayer":
        return cls(glorot_uniform(n_in, n_out, rng), np.zeros(n_out), activation, dropout_rate)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def params(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.weights": self.weights, f"{prefix}.bias": self.bias}


@dataclass
class DenseCache:
    x: np.ndarray
    a: np.ndarray  # post-activation, pre-dropout
    mask: np.ndarray | None


def dense_forward(layer: DenseLayer, x: np.ndarray, train: bool = False,
                  rng: np.random.Generator | None = None) -> tuple[np.ndarray, DenseCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise ShapeError(f"input shape {x.shape} does not match layer weights {layer.weights.shape} "
                         f"(expected (n, {layer.in_dim}))")
    z = x @ layer.weights.T + layer.bias
    if layer.activation == "relu":
        a = np.maximum(z, 0.0)
    elif layer.activation == "sigmoid":
        a = sigmoid(z)
    elif layer.activation == "softmax":
        a = softmax(z, axis=1)
    else:
        a = z
    mask = None
    if train and layer.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        keep = 1.0 - layer.dropout_rate
        mask = (rng.random(a.shape) < keep) / keep
        out = a * mask
    else:
        out = a
    return out, DenseCache(x, a, mask)


def dense_backward(layer: DenseLayer, dout: np.ndarray,
                   cache: DenseCache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(dx, dW, db)`` for one layer."""
    if dout.shape != cache.a.shape:
        raise ShapeError(f"gradient shape {dout.shape} does not match cached output {cache.a.shape}")
    da = dout * cache.mask if cache.mask is not None else dout
    if layer.activation == "relu":
        dz = da * (cache.a > 0)
    elif layer.activation == "sigmoid":
        dz = da * cache.a * (1.0 - cache.a)
    elif layer.activation == "softmax":
        dz = softmax_backward(da, cache.a, axis=1)
    else:
        dz = da
    return dz @ layer.weights, dz.T @ cache.x, dz.sum(axis=0)


class Sequential:
    """A static stack of dense layers with named parameters."""

    def __init__(self, layers: Sequence[DenseLayer], name: str):
        self.layers = list(layers)
        self.name = name

    @classmethod
    def build(cls, dims: Sequence[int], activations: Sequence[str], dropouts: Sequence[float],
              rng: np.random.Generator, name: str) -> "Sequential":
        if not len(dims) - 1 == len(activations) == len(dropouts):
            raise ValueError("dims, activations and dropouts disagree in length")
        layers = [DenseLayer.init(dims[i], dims[i + 1], rng, activations[i], dropouts[i])
                  for i in range(len(activations))]
        return cls(layers, name)

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            out.update(layer.params(f"{self.name}.{i}"))
        return out

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> tuple[np.ndarray, list[DenseCache]]:
        caches = []
        for layer in self.layers:
            x, cache = dense_forward(layer, x, train, rng)
            caches.append(cache)
        return x, caches

    def backward(self, dout: np.ndarray, caches: list[DenseCache]) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        return backward(self, dout, caches)


def backward(network: Sequential, loss_gradient: np.ndarray,
             caches: list[DenseCache]) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Backpropagate through a layer stack.

    Returns the gradient with respect to the stack input and a gradient for
    every parameter reported by ``network.params()``.
    """
    if len(caches) != len(network.layers):
        raise ShapeError(f"{len(caches)} caches for {len(network.layers)} layers in {network.name!r}")
    grads: dict[str, np.ndarray] = {}
    d = loss_gradient
    for i in range(len(network.layers) - 1, -1, -1):
        d, dw, db = dense_backward(network.layers[i], d, caches[i])
        grads[f"{network.name}.{i}.weights"] = dw
        grads[f"{network.name}.{i}.bias"] = db
    return d, grads


@dataclass
class Adagrad:
    """Adagrad with L2 weight decay folded into the gradient.

    Accumulators are keyed by parameter name and created lazily at zero.
    """

    learning_rate: float
    weight_decay: float = 0.0
    epsilon: float = ADAGRAD_EPS
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        adagrad_step(self, params, grads)


def adagrad_step(state: Adagrad, params: Mapping[str, np.ndarray],
                 grads: Mapping[str, np.ndarray]) -> Mapping[str, np.ndarray]:
    """Update ``params`` in place and return them."""
    if set(params) != set(grads):
        missing = sorted(set(params) - set(grads))
        extra = sorted(set(grads) - set(params))
        raise KeyError(f"params and grads not aligned; missing grads {missing}, unknown grads {extra}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {p.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * p
        acc = state.accumulators.get(name)
        if acc is None:
            acc = state.accumulators[name] = np.zeros_like(p)
        tmp = np.multiply(g, g)
        acc += tmp
        np.sqrt(acc, out=tmp)
        tmp += state.epsilon
        np.divide(g, tmp, out=tmp)
        tmp *= state.learning_rate
        p -= tmp
    return params
