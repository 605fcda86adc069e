"""Dense-network substrate: layers, hand-coded backward passes and Adam.

Everything is float64. A forward pass returns a *tape* (the per-layer
activations) that ``backward`` consumes, so one network can be evaluated on
several batches before gradients are taken (e.g. the shared trunk on real
and generated samples).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError, StateError

ACTIVATIONS = ("relu", "sigmoid", "softmax", "identity")
LOG_FLOOR = 1e-12


def softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    return np.logaddexp(0.0, x)


def safe_log(p):
    return np.log(np.maximum(p, LOG_FLOOR))


def _as_2d(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got shape {x.shape}")
    return x


class Dense:
    """Fully connected layer ``activation(x @ W + b)``."""

    def __init__(self, n_in, n_out, activation="identity", rng=None, scale=None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = np.random.default_rng(0) if rng is None else rng
        if scale is None:
            scale = np.sqrt(6.0 / (n_in + n_out))
        self.W = rng.uniform(-scale, scale, size=(n_in, n_out))
        self.b = np.zeros(n_out)
        self.activation = activation

    @property
    def n_in(self):
        return self.W.shape[0]

    @property
    def n_out(self):
        return self.W.shape[1]

    def params(self):
        return [self.W, self.b]

    def forward(self, x):
        x = _as_2d(x)
        if x.shape[1] != self.n_in:
            raise ShapeError(f"layer expects {self.n_in} input columns, got {x.shape[1]}")
        z = x @ self.W + self.b
        if self.activation == "relu":
            y = np.maximum(z, 0.0)
        elif self.activation == "sigmoid":
            y = sigmoid(z)
        elif self.activation == "softmax":
            y = softmax(z)
        else:
            y = z
        return y, (x, z, y)

    def backward(self, cache, gy):
        x, z, y = cache
        if self.activation == "relu":
            gz = gy * (z > 0)
        elif self.activation == "sigmoid":
            gz = gy * y * (1.0 - y)
        elif self.activation == "softmax":
            gz = y * (gy - (gy * y).sum(axis=1, keepdims=True))
        else:
            gz = gy
        return gz @ self.W.T, [x.T @ gz, gz.sum(axis=0)]


@dataclass
class Tape:
    net: "Network"
    caches: list

    @property
    def output(self):
        return self.caches[-1][2] if self.caches else None


class Network:
    """A stack of Dense layers."""

    def __init__(self, layers):
        self.layers = list(layers)
        self.tape = None

    @classmethod
    def mlp(cls, sizes, hidden="relu", out="identity", rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        layers = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            act = out if i == len(sizes) - 2 else hidden
            layers.append(Dense(a, b, act, rng=rng))
        return cls(layers)

    @property
    def n_in(self):
        return self.layers[0].n_in

    @property
    def n_out(self):
        return self.layers[-1].n_out

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def run(self, x):
        """Forward pass returning ``(output, tape)`` without touching ``self.tape``."""
        caches = []
        h = x
        for layer in self.layers:
            h, cache = layer.forward(h)
            caches.append(cache)
        return h, Tape(self, caches)

    def forward(self, x):
        y, self.tape = self.run(x)
        return y

    __call__ = forward


def backward(net, loss_grad, tape=None):
    """Backpropagate ``loss_grad`` (dL/d output) through ``net``.

    Uses the tape of the most recent ``net.forward`` unless one is given.
    Returns ``(param_grads, input_grad)`` with grads aligned to ``net.params()``.
    """
    tape = net.tape if tape is None else tape
    if tape is None:
        raise StateError("backward called before any forward pass")
    if tape.net is not net:
        raise StateError("tape was recorded on a different network")
    g = np.asarray(loss_grad, dtype=np.float64)
    out = tape.output
    if g.shape != out.shape:
        raise ShapeError(f"loss gradient shape {g.shape} != output shape {out.shape}")
    grads = []
    for layer, cache in zip(reversed(net.layers), reversed(tape.caches)):
        g, pg = layer.backward(cache, g)
        grads = pg + grads
    return grads, g


def add_grads(a, b):
    if a is None:
        return [x.copy() for x in b]
    return [x + y for x, y in zip(a, b)]


@dataclass
class Adam:
    """Adam with bias correction; updates the given arrays in place."""

    params: list
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default=None)
    v: list = field(default=None)

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.m is None:
            self.m = [np.zeros_like(p) for p in self.params]
        if self.v is None:
            self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ShapeError(f"got {len(grads)} gradients for {len(self.params)} parameters")
        for p, g in zip(self.params, grads):
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise NumericError("non-finite gradient; Adam update refused")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return self.params

