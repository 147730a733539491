"""The trainable embedding map: a small MLP with hand-written backprop.

Hidden layers use ReLU; the last layer is affine with identity activation
so embeddings are unconstrained. A frozen single-identity-layer variant
(:meth:`Backbone.passthrough`) serves externally computed features: its
forward is the identity and its backward reports zero parameter gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_ACTIVATIONS = ("identity", "relu")


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray     # (out,)
    activation: str = "relu"

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("layer weights must be (out, in) with matching bias")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValueError("layer parameters must be finite")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Backbone:
    """Ordered affine+activation layers mapping inputs to embeddings."""

    layers: list[Layer]
    input_dim: int
    frozen: bool = False

    def __post_init__(self):
        width = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.weights.shape[1] != width:
                raise ValueError(f"layer {i} expects {layer.weights.shape[1]} "
                                 f"inputs, previous width is {width}")
            width = layer.weights.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.layers[-1].weights.shape[0] if self.layers else self.input_dim

    @classmethod
    def init(cls, dims: list[int], seed: int, frozen: bool = False) -> "Backbone":
        """Seeded random net over widths [input, hidden..., embed].

        Every layer is drawn uniform in +-1/sqrt(fan_in); hidden layers get
        ReLU, the last layer identity.
        """
        if len(dims) < 2:
            raise ValueError("need at least input and embedding widths")
        rng = np.random.default_rng(seed)
        layers = []
        for i in range(len(dims) - 1):
            fan_in, fan_out = dims[i], dims[i + 1]
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            b = rng.uniform(-bound, bound, size=fan_out)
            act = "identity" if i == len(dims) - 2 else "relu"
            layers.append(Layer(w, b, act))
        return cls(layers, dims[0], frozen=frozen)

    @classmethod
    def passthrough(cls, dim: int) -> "Backbone":
        """Frozen identity map for precomputed embeddings."""
        return cls([Layer(np.eye(dim), np.zeros(dim), "identity")], dim,
                   frozen=True)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def replace_parameters(self, params: list[np.ndarray]) -> "Backbone":
        if len(params) != 2 * len(self.layers):
            raise ValueError("parameter list length mismatch")
        layers = [Layer(params[2 * i], params[2 * i + 1], l.activation)
                  for i, l in enumerate(self.layers)]
        return Backbone(layers, self.input_dim, self.frozen)

    def copy(self) -> "Backbone":
        return self.replace_parameters([p.copy() for p in self.parameters()])


@dataclass
class ForwardCache:
    """Intermediate activations kept for the backward pass."""

    net: Backbone
    inputs: list[np.ndarray] = field(default_factory=list)
    pre_activations: list[np.ndarray] = field(default_factory=list)


def forward(net: Backbone, inputs: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Map a (B, input_dim) batch to (B, embed_dim) embeddings."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"inputs must be (B, {net.input_dim}), got {x.shape}")
    cache = ForwardCache(net)
    for layer in net.layers:
        cache.inputs.append(x)
        pre = x @ layer.weights.T + layer.bias
        cache.pre_activations.append(pre)
        x = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
    return x, cache


def backward(net: Backbone, cache: ForwardCache,
             d_embeddings: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients w.r.t. parameters (interleaved W, b list) and inputs."""
    if cache.net is not net:
        raise ValueError("cache does not belong to this backbone")
    if len(cache.inputs) != len(net.layers):
        raise ValueError("stale cache: layer count mismatch")
    grad = np.asarray(d_embeddings, dtype=np.float64)
    if net.layers and grad.shape != cache.pre_activations[-1].shape:
        raise ValueError("d_embeddings shape does not match the forward pass")
    param_grads: list[np.ndarray] = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            grad = grad * (cache.pre_activations[i] > 0.0)
        param_grads[2 * i] = grad.T @ cache.inputs[i]
        param_grads[2 * i + 1] = grad.sum(axis=0)
        grad = grad @ layer.weights
    if net.frozen:
        param_grads = [np.zeros_like(g) for g in param_grads]
    return param_grads, grad


def rescale_last_layer(net: Backbone, factor: float) -> Backbone:
    """Divide the last layer's weights and bias by ``factor``.

    With an identity last activation this scales embeddings by exactly
    1/factor.
    """
    if not (np.isfinite(factor) and factor > 0):
        raise ValueError(f"factor must be positive and finite, got {factor}")
    if not net.layers:
        raise ValueError("backbone has no layers to rescale")
    scaled = net.copy()
    last = scaled.layers[-1]
    last.weights /= factor
    last.bias /= factor
    return scaled
