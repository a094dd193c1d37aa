"""Time-conditioned affine-coupling flow.

The flow is parameterized in the density direction ``x -> z``. Block k keeps
the coordinates of one parity and maps the others as
``z_u = x_u * exp(s) + b`` with ``(s, b)`` produced by a conditioner network
fed with the time feature and the kept coordinates. The log-density is the
standard-normal log-density of the final ``z`` plus the sum of all ``s``.
Scales are soft-clamped, ``s = c * tanh(raw / c)``, so ``exp(s)`` stays
bounded during training.
"""

import math

import numpy as np

from ..errors import NumericError
from .base import DensityModel, as_points, as_times
from .nn import MLP

SCALE_CLAMP = 4.0
_LOG2PI = math.log(2.0 * math.pi)
_ROWS = 16384  # rows per taped chunk; bounds activation memory


class CouplingFlowDensity(DensityModel):
    kind = "flow"
    exact_density = True
    direct_sampling = True
    spatial_gradient = True

    def __init__(self, domain, t0=0.0, T=1.0, n_blocks=6, hidden=(64, 64), activation="tanh", seed=0,
                 x_scale=1.0, scan_points=512, mc_points=100_000, init_scale=0.0):
        super().__init__(domain, t0, T, scan_points, mc_points)
        self.n_blocks = int(n_blocks)
        self.hidden = tuple(int(h) for h in hidden)
        self.activation = activation
        self.x_scale = float(x_scale)
        d = self.dim
        self.masks = []
        nets = []
        for k in range(self.n_blocks):
            if d == 1:
                keep, upd = np.array([], dtype=int), np.array([0])
            else:
                idx = np.arange(d)
                keep, upd = idx[idx % 2 == k % 2], idx[idx % 2 != k % 2]
            self.masks.append((keep, upd))
            nets.append(MLP([1 + keep.size, *self.hidden, 2 * upd.size], activation))
        self.nets = nets
        self._flat = np.zeros(sum(n.n_params for n in nets))
        off = 0
        rng = np.random.default_rng(seed)
        for net in nets:
            net.bind(self._flat, off)
            off += net.n_params
            net.init(rng, zero_last=True)
            if init_scale:
                W, b = net.layers[-1]
                W[...] = rng.normal(0.0, init_scale, W.shape)
                b[...] = rng.normal(0.0, init_scale, b.shape)

    # -- core passes --------------------------------------------------------

    def _cond_input(self, tf, x, keep):
        return np.concatenate([tf[:, None], x[:, keep] / self.x_scale], axis=1)

    def _scale_shift(self, out, nu):
        raw_s = out[:, :nu]
        s = SCALE_CLAMP * np.tanh(raw_s / SCALE_CLAMP)
        if not np.all(np.isfinite(s)) or not np.all(np.isfinite(out[:, nu:])):
            raise NumericError("coupling scale or shift is not finite")
        return raw_s, s, out[:, nu:]

    def forward(self, t, x, keep_tape=False):
        """Map data points to base points; returns ``(z, logdet[, tape])``."""
        x = as_points(x, self.dim).copy()
        n = x.shape[0]
        tf = self.time_feature(as_times(t, n))
        logdet = np.zeros(n)
        tape = []
        for net, (keep, upd) in zip(self.nets, self.masks):
            inp = self._cond_input(tf, x, keep)
            if keep_tape:
                out, ntape = net.forward(inp, keep=True)
            else:
                out = net.forward(inp)
            raw_s, s, b = self._scale_shift(out, upd.size)
            xin_u = x[:, upd].copy()
            x[:, upd] = xin_u * np.exp(s) + b
            logdet += s.sum(axis=1)
            if keep_tape:
                tape.append((ntape, raw_s, s, xin_u))
        if keep_tape:
            return x, logdet, tape
        return x, logdet

    def inverse(self, t, z):
        """Map base points back to data points."""
        x = as_points(z, self.dim).copy()
        n = x.shape[0]
        tf = self.time_feature(as_times(t, n))
        for net, (keep, upd) in zip(reversed(self.nets), reversed(self.masks)):
            out = net.forward(self._cond_input(tf, x, keep))
            _, s, b = self._scale_shift(out, upd.size)
            x[:, upd] = (x[:, upd] - b) * np.exp(-s)
        return x

    def log_density(self, t, x, floor=None):
        x = as_points(x, self.dim)
        ts = as_times(t, x.shape[0])
        out = np.empty(x.shape[0])
        for a in range(0, x.shape[0], _ROWS):
            z, logdet = self.forward(ts[a : a + _ROWS], x[a : a + _ROWS])
            out[a : a + _ROWS] = -0.5 * (z**2).sum(axis=1) - 0.5 * self.dim * _LOG2PI + logdet
        return out

    def density(self, t, x, Z=None):
        return np.exp(self.log_density(t, x))

    def _backward(self, tape, z, weights, want_x=False):
        """Gradient of ``sum_j w_j log p(x_j)`` w.r.t. parameters (and inputs)."""
        grad = np.zeros_like(self._flat)
        w = weights[:, None]
        gx = -z * w  # d/dz of the Gaussian term
        for net, (keep, upd), (ntape, raw_s, s, xin_u) in zip(reversed(self.nets), reversed(self.masks),
                                                              reversed(tape)):
            gy_u = gx[:, upd]
            es = np.exp(s)
            gs = gy_u * xin_u * es + w
            graw = gs * (1.0 - np.tanh(raw_s / SCALE_CLAMP) ** 2)
            gout = np.concatenate([graw, gy_u], axis=1)
            gin = net.backward(ntape, gout, grad)
            gx_new = gx.copy()
            gx_new[:, upd] = gy_u * es
            gx_new[:, keep] += gin[:, 1:] / self.x_scale
            gx = gx_new
        return grad, gx

    def log_density_grad(self, t, x, weights, floor=1e-12):
        x = as_points(x, self.dim)
        n = x.shape[0]
        w = np.asarray(weights, dtype=float).reshape(n)
        ts = as_times(t, n)
        vals = np.empty(n)
        grad = np.zeros_like(self._flat)
        for a in range(0, n, _ROWS):
            sl = slice(a, a + _ROWS)
            z, logdet, tape = self.forward(ts[sl], x[sl], keep_tape=True)
            v = -0.5 * (z**2).sum(axis=1) - 0.5 * self.dim * _LOG2PI + logdet
            bad = ~np.isfinite(v)
            if bad.any():
                raise NumericError(f"non-finite flow log-density at row {a + int(np.flatnonzero(bad)[0])}")
            vals[sl] = v
            grad += self._backward(tape, z, w[sl])[0]
        return vals, grad, 0

    def raw(self, t, x):
        return self.density(t, x)

    def raw_grad(self, t, x, weights):
        x = as_points(x, self.dim)
        p = self.density(t, x)
        if callable(weights):
            weights = weights(p, slice(None))
        _, grad, _ = self.log_density_grad(t, x, np.asarray(weights, dtype=float).reshape(-1) * p)
        return p, grad

    def grad_log_x(self, t, x):
        x = as_points(x, self.dim)
        ts = as_times(t, x.shape[0])
        gx = np.empty_like(x)
        for a in range(0, x.shape[0], _ROWS):
            sl = slice(a, a + _ROWS)
            z, _, tape = self.forward(ts[sl], x[sl], keep_tape=True)
            gx[sl] = self._backward(tape, z, np.ones(z.shape[0]))[1]
        return gx

    def grad_x(self, t, x):
        x = as_points(x, self.dim)
        return self.density(t, x)[:, None] * self.grad_log_x(t, x)

    # -- rectification is not needed: the flow is already normalized ------

    def scan(self, t):
        return 1.0, float("nan")

    def sample(self, t, n, rng, envelope=None, mirror=False, max_tries=None):
        z = rng.standard_normal((int(n), self.dim))
        x = self.inverse(t, z)
        return -x if mirror else x

    def config(self):
        return {"n_blocks": self.n_blocks, "hidden": list(self.hidden), "activation": self.activation,
                "x_scale": self.x_scale}
