"""Multilayer perceptron with hand-written forward and reverse passes.

Inputs are columns: a batch is an ``(in_dim, B)`` array and a single
point may be passed as a 1-D vector.  Hidden layers use ReLU, the output
layer uses tanh.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidSpec

_ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass
class MlpParams:
    weights: list
    biases: list
    hidden_activation: str = "relu"
    output_activation: str = "tanh"

    @property
    def dims(self):
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    @property
    def n_layers(self):
        return len(self.weights)

    def zeros_like(self):
        return MlpParams([np.zeros_like(W) for W in self.weights],
                         [np.zeros_like(b) for b in self.biases],
                         self.hidden_activation, self.output_activation)

    def copy(self):
        return MlpParams([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                         self.hidden_activation, self.output_activation)

    def arrays(self):
        """Parameter arrays in canonical order: W1, b1, W2, b2, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def validate(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise InvalidSpec("weights and biases must be non-empty and paired")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (W.shape[0],):
                raise DimensionMismatch(f"layer {i}: bias shape {b.shape} vs weight {W.shape}")
            if i and W.shape[1] != self.weights[i - 1].shape[0]:
                raise DimensionMismatch(f"layer {i}: input dim {W.shape[1]} does not chain")
        for act in (self.hidden_activation, self.output_activation):
            if act not in _ACTIVATIONS:
                raise InvalidSpec(f"unknown activation {act!r}")
        return self


@dataclass
class MlpTape:
    """Per-layer pre-activations and post-activations from one forward pass.

    ``activations[0]`` is the input, ``activations[l + 1]`` is the output of
    layer ``l``.
    """

    pre: list = field(default_factory=list)
    activations: list = field(default_factory=list)
    squeeze: bool = False

    @property
    def n_layers(self):
        return len(self.pre)


def init(dims, seed, hidden_activation="relu", output_activation="tanh"):
    """Gaussian weights with variance 2/fan_in, zero biases."""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise InvalidSpec(f"need at least input and output dims, got {dims}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, hidden_activation, output_activation)


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z, a, da):
    if name == "relu":
        return da * (z > 0.0)
    if name == "tanh":
        return da * (1.0 - a * a)
    return da


def forward(params, x):
    """Evaluate the network; returns ``(y, tape)``."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    a = x[:, None] if squeeze else x
    if a.shape[0] != params.weights[0].shape[1]:
        raise DimensionMismatch(f"input dim {a.shape[0]} != {params.weights[0].shape[1]}")
    tape = MlpTape(squeeze=squeeze)
    tape.activations.append(a)
    last = params.n_layers - 1
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = W @ a + b[:, None]
        a = _act(params.output_activation if l == last else params.hidden_activation, z)
        tape.pre.append(z)
        tape.activations.append(a)
    return (a[:, 0] if squeeze else a), tape


def backward(params, tape, dy):
    """Reverse pass for the scalar ``<dy, y>`` (summed over the batch).

    Returns ``(grads, dx)`` where ``grads`` is an :class:`MlpParams` of
    gradients.
    """
    dy = np.asarray(dy, dtype=np.float64)
    da = dy[:, None] if dy.ndim == 1 else dy
    if da.shape != tape.activations[-1].shape:
        raise DimensionMismatch(f"dy shape {da.shape} != output shape {tape.activations[-1].shape}")
    if tape.n_layers != params.n_layers:
        raise DimensionMismatch("tape does not match network depth")
    gW = [None] * params.n_layers
    gb = [None] * params.n_layers
    last = params.n_layers - 1
    for l in range(last, -1, -1):
        act = params.output_activation if l == last else params.hidden_activation
        dz = _act_grad(act, tape.pre[l], tape.activations[l + 1], da)
        gW[l] = dz @ tape.activations[l].T
        gb[l] = dz.sum(axis=1)
        da = params.weights[l].T @ dz
    grads = MlpParams(gW, gb, params.hidden_activation, params.output_activation)
    return grads, (da[:, 0] if tape.squeeze else da)
