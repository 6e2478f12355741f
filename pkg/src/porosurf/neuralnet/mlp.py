"""Fully connected tanh networks with exact reverse-mode gradients.

The final layer is affine; all hidden layers apply tanh.  Parameters live in
plain float64 arrays so training is bitwise deterministic for a fixed seed
and batch order.
"""
from __future__ import annotations

import numpy as np

from ..errors import InvalidInput, NumericalFailure


def philox_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic Philox stream; ``key`` separates substreams of one seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


class MLP:
    """Multilayer perceptron defined by layer widths.

    ``widths = (d_in, h1, ..., d_out)``; weights[i] has shape
    (widths[i], widths[i+1]) and acts on row vectors.
    """

    def __init__(self, widths, weights, biases):
        self.widths = tuple(int(w) for w in widths)
        self.weights = weights
        self.biases = biases
        if len(weights) != len(self.widths) - 1 or len(biases) != len(weights):
            raise InvalidInput("parameter count does not match widths")
        for i, (W, b) in enumerate(zip(weights, biases)):
            if W.shape != (self.widths[i], self.widths[i + 1]) or b.shape != (self.widths[i + 1],):
                raise InvalidInput(f"layer {i} parameter shapes do not chain")

    @classmethod
    def init(cls, widths, rng: np.random.Generator) -> "MLP":
        """Glorot-uniform weights (variance 2/(fan_in+fan_out)), zero biases."""
        weights, biases = [], []
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            limit = np.sqrt(6.0 / (n_in + n_out))
            weights.append(rng.uniform(-limit, limit, size=(n_in, n_out)))
            biases.append(np.zeros(n_out))
        return cls(widths, weights, biases)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list:
        """Flat parameter list [W0, b0, W1, b1, ...] (views, not copies)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(np.asarray(x, dtype=float))
        return y

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping layer inputs/activations for backward."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.widths[0]:
            raise InvalidInput(
                f"input width {x.shape[1]} != expected {self.widths[0]}")
        inputs = [x]
        a = x
        last = self.n_layers - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            a = z if i == last else np.tanh(z)
            inputs.append(a)
        return a, inputs

    def backward(self, cache: list, dout: np.ndarray, need_dx: bool = False):
        """Gradients of sum(dout * output) w.r.t. every weight and bias.

        ``cache`` is the list returned by :meth:`forward_cached`; hidden-layer
        entries hold post-tanh activations, so d tanh = 1 - a^2.
        """
        grads_W = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        delta = np.atleast_2d(dout)
        for i in range(self.n_layers - 1, -1, -1):
            a_prev = cache[i]
            grads_W[i] = a_prev.T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                da = delta @ self.weights[i].T
                delta = da * (1.0 - cache[i] ** 2)
            elif need_dx:
                delta = delta @ self.weights[i].T
        dx = delta if need_dx else None
        grads = []
        for gW, gb in zip(grads_W, grads_b):
            grads.extend((gW, gb))
        return grads, dx

    def copy(self) -> "MLP":
        return MLP(self.widths, [W.copy() for W in self.weights],
                   [b.copy() for b in self.biases])


def forward(net: MLP, x) -> np.ndarray:
    return net.forward(x)


def loss_and_gradient(net: MLP, x, targets):
    """Mean-squared-error loss over all output entries and its exact gradients.

    Returns (loss, grads) with grads ordered like ``net.parameters()``.
    Duplicating the batch leaves both values unchanged (mean normalization).
    """
    y, cache = net.forward_cached(x)
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    if y.shape != t.shape:
        raise InvalidInput(f"target shape {t.shape} != output shape {y.shape}")
    resid = y - t
    loss = float(np.mean(resid * resid))
    if not np.isfinite(loss):
        raise NumericalFailure("non-finite loss")
    grads, _ = net.backward(cache, (2.0 / resid.size) * resid)
    return loss, grads
