"""Minimal reverse-mode engine for fully connected networks.

Parameters live in one flat float64 vector owned by the density model; every
:class:`MLP` binds views into it at a fixed offset, so optimizers and
checkpoints only ever see a single array.
"""

import numpy as np
from scipy.special import expit

from ..errors import NumericError


def _activation(name, beta):
    if name == "relu":
        return (lambda z: np.maximum(z, 0.0)), (lambda z, a: (z > 0.0).astype(float))
    if name == "softplus":
        return (
            lambda z: np.logaddexp(0.0, beta * z) / beta,
            lambda z, a: expit(beta * z),
        )
    if name == "tanh":
        return np.tanh, (lambda z, a: 1.0 - a * a)
    raise ValueError(f"unknown activation {name!r}")


class MLP:
    """Affine layers with an activation between them (none after the last)."""

    def __init__(self, sizes, activation="relu", beta=20.0):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least an input and an output size")
        self.sizes = [int(s) for s in sizes]
        self.activation = activation
        self.beta = float(beta)
        self._f, self._df = _activation(activation, self.beta)
        self.n_params = sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))
        self.offset = None
        self.layers = None

    def views(self, flat, offset=None):
        offset = self.offset if offset is None else offset
        out = []
        pos = offset
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            W = flat[pos : pos + a * b].reshape(a, b)
            pos += a * b
            out.append((W, flat[pos : pos + b]))
            pos += b
        return out

    def bind(self, flat, offset):
        self.offset = int(offset)
        self.layers = self.views(flat, offset)

    def init(self, rng, zero_last=False):
        """Uniform fan-in initialization ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``, in place.

        This is Kaiming-uniform with negative slope sqrt(5), the common default
        for dense layers; it keeps early outputs close to the output bias.
        """
        n = len(self.layers)
        for k, (W, b) in enumerate(self.layers):
            fan_in = W.shape[0]
            if zero_last and k == n - 1:
                W[...] = 0.0
                b[...] = 0.0
                continue
            bound = 1.0 / np.sqrt(fan_in)
            W[...] = rng.uniform(-bound, bound, W.shape)
            b[...] = rng.uniform(-bound, bound, b.shape)

    def forward(self, x, keep=False):
        """Evaluate on rows of ``x``; with ``keep`` also return the tape."""
        h = x
        tape = []
        n = len(self.layers)
        for k, (W, b) in enumerate(self.layers):
            z = h @ W + b
            if keep:
                tape.append((h, z))
            h = z if k == n - 1 else self._f(z)
        if keep:
            return h, tape
        return h

    def backward(self, tape, gout, gflat=None):
        """Pull ``gout`` (dL/doutput) back through the tape.

        Parameter gradients are accumulated into ``gflat`` at this network's
        offset; the gradient with respect to the input rows is returned.
        """
        gviews = self.views(gflat) if gflat is not None else None
        g = gout
        n = len(self.layers)
        for k in range(n - 1, -1, -1):
            h, z = tape[k]
            W, _ = self.layers[k]
            if k != n - 1:
                a = self._f(z)
                g = g * self._df(z, a)
            if gviews is not None:
                gW, gb = gviews[k]
                gW += h.T @ g
                gb += g.sum(axis=0)
            g = g @ W.T
        return g


def check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr
