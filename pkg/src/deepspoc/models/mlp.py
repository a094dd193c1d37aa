"""Fully connected density network ``rho(t, x)`` with rectification."""

import numpy as np

from ..errors import CapabilityError, InvalidParameterError
from .base import DensityModel, as_points, as_times
from .nn import MLP, check_finite

_ROWS = 16384  # rows per forward chunk; bounds tape memory


class MlpDensity(DensityModel):
    """Raw density ``rho(t, x) = NN(tau(t), xi(x))``.

    Inputs are affinely mapped to ``[-1, 1]`` (time over the grid span, space
    over the domain box). The raw output is unconstrained; probabilistic use
    goes through rectification.
    """

    kind = "mlp"

    def __init__(self, domain, t0=0.0, T=1.0, hidden=(512,) * 6, activation="relu", beta=20.0, seed=0,
                 scan_points=512, mc_points=100_000, mirror=False):
        super().__init__(domain, t0, T, scan_points, mc_points)
        if activation not in ("relu", "softplus", "tanh"):
            raise InvalidParameterError(f"unknown activation {activation!r}")
        self.hidden = tuple(int(h) for h in hidden)
        self.activation = activation
        self.beta = float(beta)
        self.spatial_gradient = activation != "relu"
        self.net = MLP([1 + self.dim, *self.hidden, 1], activation, beta)
        self._flat = np.zeros(self.net.n_params)
        self.net.bind(self._flat, 0)
        self.seed = int(seed)
        self.net.init(np.random.default_rng(seed))
        if mirror:
            self.mirror_init()
        self._center = (self.domain.lo_arr + self.domain.hi_arr) / 2.0
        self._scale = 2.0 / (self.domain.hi_arr - self.domain.lo_arr)
        self._shift_to_uniform()

    def _shift_to_uniform(self):
        # a random relu net is often nonpositive on the whole box; shifting the
        # output bias so the mean raw value is 1/|box| makes rectification valid
        pts, w = self.quad_nodes()
        mean = float(w @ self.raw(self.t0, pts)) / self.domain.volume
        _, b = self.net.layers[-1]
        b += 1.0 / self.domain.volume - mean

    def mirror_init(self):
        """Negate the spatial input weights: the network becomes ``x -> -x``."""
        if not self.domain.symmetric:
            raise InvalidParameterError("mirroring needs a domain symmetric about the origin")
        W, _ = self.net.layers[0]
        W[1:, :] *= -1.0

    def _features(self, ts, x):
        return np.concatenate([self.time_feature(ts)[:, None], (x - self._center) * self._scale], axis=1)

    def raw(self, t, x):
        x = as_points(x, self.dim)
        n = x.shape[0]
        check_finite(x, "model input")
        ts = as_times(t, n)
        out = np.empty(n)
        for a in range(0, n, _ROWS):
            out[a : a + _ROWS] = self.net.forward(self._features(ts[a : a + _ROWS], x[a : a + _ROWS]))[:, 0]
        return out

    def raw_grad(self, t, x, weights):
        x = as_points(x, self.dim)
        n = x.shape[0]
        check_finite(x, "model input")
        ts = as_times(t, n)
        wfn = weights if callable(weights) else None
        w = None if wfn else np.asarray(weights, dtype=float).reshape(n)
        out = np.empty(n)
        grad = np.zeros_like(self._flat)
        for a in range(0, n, _ROWS):
            sl = slice(a, a + _ROWS)
            y, tape = self.net.forward(self._features(ts[sl], x[sl]), keep=True)
            out[sl] = y[:, 0]
            wc = wfn(y[:, 0], sl) if wfn else w[sl]
            self.net.backward(tape, wc[:, None], grad)
        return out, grad

    def grad_x(self, t, x):
        if not self.spatial_gradient:
            raise CapabilityError("spatial gradient needs a smooth activation; this network uses relu")
        x = as_points(x, self.dim)
        n = x.shape[0]
        ts = as_times(t, n)
        out = np.empty((n, self.dim))
        for a in range(0, n, _ROWS):
            sl = slice(a, a + _ROWS)
            y, tape = self.net.forward(self._features(ts[sl], x[sl]), keep=True)
            gin = self.net.backward(tape, np.ones_like(y))
            out[sl] = gin[:, 1:] * self._scale
        return out

    def config(self):
        return {"hidden": list(self.hidden), "activation": self.activation, "beta": self.beta}
