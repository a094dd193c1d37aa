"""Density-model interface, rectification and sampling.

A model represents a time-indexed function ``rho(t, x)`` on a box. Models
whose raw output is not a probability density (the MLP and Fourier families)
are *rectified* before any probabilistic use: clipped at zero on the box and
divided by the clipped integral. During one simulated batch a model is frozen
(:class:`FrozenModel`), which caches per-node normalizers, envelopes and
sample clouds so the batch sees a single consistent measure flow.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..errors import CapabilityError, DegenerateDensityError, InvalidParameterError, SamplingError
from ..mollify import EmpiricalMeasure, kde_eval
from ..sde import TAG_FIELD, keyed_rng

log = logging.getLogger(__name__)

SCAN_CAP = 2**20
ENVELOPE_SAFETY = 1.2


@dataclass(frozen=True)
class Domain:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise InvalidParameterError("domain bounds differ in length")
        if not all(a < b for a, b in zip(lo, hi)):
            raise InvalidParameterError(f"empty domain box {lo} x {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def box(cls, L, dim):
        return cls((-L,) * dim, (L,) * dim)

    @property
    def dim(self):
        return len(self.lo)

    @property
    def lo_arr(self):
        return np.array(self.lo)

    @property
    def hi_arr(self):
        return np.array(self.hi)

    @property
    def volume(self):
        return float(np.prod(self.hi_arr - self.lo_arr))

    @property
    def half_width(self):
        return float(np.max(self.hi_arr - self.lo_arr) / 2.0)

    @property
    def symmetric(self):
        return np.allclose(self.lo_arr, -self.hi_arr)

    def contains(self, x):
        x = np.atleast_2d(x)
        return ((x >= self.lo_arr) & (x <= self.hi_arr)).all(axis=1)

    def uniform(self, rng, n, mirror=False):
        u = rng.random((int(n), self.dim))
        if mirror:
            u = 1.0 - u
        return self.lo_arr + u * (self.hi_arr - self.lo_arr)

    def midpoint_grid(self, n_axis):
        """Cell centres of an ``n_axis``-per-axis grid and the cell volume."""
        axes = [a + (b - a) * (np.arange(n_axis) + 0.5) / n_axis for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        return pts, self.volume / n_axis**self.dim

    def to_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi)}


def quadrature_nodes(domain, scan_points=512, mc_points=100_000, seed=0):
    """Rectification quadrature: midpoint grid for d <= 3, Monte Carlo above.

    Returns ``(points, weights)`` so that ``sum(w * f(points))`` approximates
    the integral of f over the box.
    """
    d = domain.dim
    if d <= 3:
        n_axis = max(2, min(int(scan_points), int(math.floor(SCAN_CAP ** (1.0 / d) + 1e-9))))
        pts, vol = domain.midpoint_grid(n_axis)
        return pts, np.full(len(pts), vol)
    rng = np.random.default_rng(seed)
    pts = domain.uniform(rng, mc_points)
    return pts, np.full(len(pts), domain.volume / mc_points)


def rectify(raw_fn, domain, scan_points=512, mc_points=100_000):
    """Rectification ``R(rho) = (rho v 0) / int (rho v 0)`` on ``domain``.

    Returns ``(density_fn, normalizer)``; the density vanishes off the box.
    """
    pts, w = quadrature_nodes(domain, scan_points, mc_points)
    vals = np.maximum(np.asarray(raw_fn(pts), dtype=float), 0.0)
    Z = float(w @ vals)
    if not Z > 0 or not np.isfinite(Z):
        raise DegenerateDensityError("function is nonpositive on the quadrature grid; cannot rectify")

    def density(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.where(domain.contains(x), np.maximum(raw_fn(x), 0.0), 0.0) / Z

    return density, Z


def accept_reject(fn, domain, n, rng, envelope, max_tries=1000, mirror=False, rate_hint=None):
    """Draw ``n`` points from the (unnormalized) density ``fn`` on ``domain``.

    Proposals are uniform on the box. If a proposal exceeds the envelope the
    envelope is raised to ``1.2 * max`` and the accepted set is discarded so
    the output stays exact. ``rate_hint`` (expected acceptance rate) only
    sizes the first proposal chunk. Returns ``(samples, stats)``.
    """
    n = int(n)
    if not envelope > 0 or not np.isfinite(envelope):
        raise SamplingError(f"invalid envelope {envelope}")
    chunks = []
    got = accepted_total = proposals = violations = 0
    rate_guess = 0.05 if rate_hint is None else min(max(float(rate_hint), 1e-4), 1.0)
    while got < n:
        if proposals >= max_tries * max(n, 1) and got == 0:
            raise SamplingError(
                f"accept-reject produced no samples after {proposals} proposals",
                acceptance_rate=0.0,
            )
        size = int(min(max(1.5 * (n - got) / rate_guess, 256), 1 << 17))
        x = domain.uniform(rng, size, mirror=mirror)
        v = rng.random(size)
        f = np.asarray(fn(x), dtype=float)
        proposals += size
        fmax = float(f.max()) if size else 0.0
        if fmax > envelope:
            violations += 1
            log.info("accept-reject envelope %.6g exceeded by %.6g; re-estimating", envelope, fmax)
            envelope = ENVELOPE_SAFETY * fmax
            chunks, got = [], 0
            continue
        acc = v * envelope < f
        k = int(acc.sum())
        accepted_total += k
        if k:
            chunks.append(x[acc])
            got += k
        rate_guess = max(accepted_total / proposals, 1e-4)
    samples = np.concatenate(chunks)[:n] if n else np.empty((0, domain.dim))
    stats = {
        "acceptance_rate": accepted_total / proposals if proposals else 1.0,
        "proposals": proposals,
        "violations": violations,
        "envelope": envelope,
    }
    return samples, stats


def as_times(t, n):
    t = np.asarray(t, dtype=float)
    return np.full(n, float(t)) if t.ndim == 0 else t.reshape(n)


def as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, dim) if dim == 1 else x.reshape(1, -1)
    return x


class DensityModel:
    """Base class: a time-dependent (raw) density on a box.

    Subclasses define ``raw`` and ``raw_grad``; rectification, sampling and
    freezing are shared. Capability flags advertise what else is available.
    """

    kind = "base"
    exact_density = False
    direct_sampling = False
    spatial_gradient = False

    def __init__(self, domain, t0=0.0, T=1.0, scan_points=512, mc_points=100_000):
        self.domain = domain
        self.dim = domain.dim
        self.t0 = float(t0)
        self.T = float(T)
        self.scan_points = int(scan_points)
        self.mc_points = int(mc_points)
        self._flat = np.zeros(0)
        self._quad = None

    # -- parameters ---------------------------------------------------------

    @property
    def params(self):
        return self._flat

    @property
    def n_params(self):
        return self._flat.size

    def set_params(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != self._flat.shape:
            raise InvalidParameterError(f"parameter shape {values.shape} != {self._flat.shape}")
        self._flat[...] = values

    # -- raw function -------------------------------------------------------

    def raw(self, t, x):
        raise NotImplementedError

    def raw_grad(self, t, x, weights):
        """Raw values and the parameter gradient of ``sum_j w_j raw_j``.

        ``weights`` may also be a callable ``(values, row_slice) -> weights``
        so losses whose weights depend on the values need one forward pass.
        """
        raise NotImplementedError

    def grad_x(self, t, x):
        raise CapabilityError(f"{self.kind} model does not provide spatial gradients")

    # -- rectification ------------------------------------------------------

    def quad_nodes(self):
        if self._quad is None:
            self._quad = quadrature_nodes(self.domain, self.scan_points, self.mc_points)
        return self._quad

    def scan(self, t):
        """Rectification normalizer and max raw value at time ``t``."""
        pts, w = self.quad_nodes()
        vals = self.raw(t, pts)
        pos = np.maximum(vals, 0.0)
        Z = float(w @ pos)
        if not Z > 0 or not np.isfinite(Z):
            raise DegenerateDensityError(f"model is nonpositive on the quadrature grid at t={float(t):.6g}")
        return Z, float(pos.max())

    def normalizer(self, t):
        return self.scan(t)[0]

    def density(self, t, x, Z=None):
        x = as_points(x, self.dim)
        if self.exact_density:
            return np.exp(self.log_density(t, x))
        if Z is None:
            Z = self.normalizer(t)
        vals = np.maximum(self.raw(t, x), 0.0) / Z
        return np.where(self.domain.contains(x), vals, 0.0)

    def log_density(self, t, x, floor=1e-12):
        return np.log(np.maximum(self.density(t, x), floor))

    def log_density_grad(self, t, x, weights, floor=1e-12):
        """Rectified log-density and the gradient of ``sum_j w_j log R(rho)_j``.

        The normalizer's parameter dependence is included. Points whose
        rectified density falls below ``floor`` are clamped (no gradient) and
        counted. Returns ``(values, grad, n_clamped)``.
        """
        x = as_points(x, self.dim)
        n = x.shape[0]
        ts = as_times(t, n)
        w = np.asarray(weights, dtype=float).reshape(n)
        raw = self.raw(ts, x)
        inside = self.domain.contains(x)
        uniq, inv = np.unique(ts, return_inverse=True)
        qpts, qw = self.quad_nodes()
        Zs = np.empty(len(uniq))
        qraw = []
        for k, tk in enumerate(uniq):
            r = self.raw(tk, qpts)
            qraw.append(r)
            Zs[k] = float(qw @ np.maximum(r, 0.0))
            if not Zs[k] > 0:
                raise DegenerateDensityError(f"model is nonpositive on the quadrature grid at t={tk:.6g}")
        dens = np.where(inside, np.maximum(raw, 0.0), 0.0) / Zs[inv]
        clamped = dens < floor
        vals = np.log(np.where(clamped, floor, dens))
        live = ~clamped
        # d log R = d rho / rho - dZ / Z on live points
        pw = np.where(live, w / np.where(live, raw, 1.0), 0.0)
        group_w = np.bincount(inv, weights=np.where(live, w, 0.0), minlength=len(uniq))
        all_t = [ts]
        all_x = [x]
        all_w = [pw]
        for k, tk in enumerate(uniq):
            if group_w[k] == 0.0:
                continue
            qwk = np.where(qraw[k] > 0.0, -group_w[k] * qw / Zs[k], 0.0)
            all_t.append(np.full(len(qpts), tk))
            all_x.append(qpts)
            all_w.append(qwk)
        _, grad = self.raw_grad(np.concatenate(all_t), np.concatenate(all_x), np.concatenate(all_w))
        return vals, grad, int(clamped.sum())

    # -- sampling -----------------------------------------------------------

    def sample(self, t, n, rng, envelope=None, mirror=False, max_tries=1000, rate_hint=None):
        """Draw n points at time t; accept-reject against the rectified density."""
        if envelope is None:
            Z, mx = self.scan(t)
            envelope = ENVELOPE_SAFETY * mx
            rate_hint = Z / (envelope * self.domain.volume)
        samples, stats = accept_reject(lambda x: np.maximum(self.raw(t, x), 0.0), self.domain, n, rng, envelope,
                                       max_tries=max_tries, mirror=mirror, rate_hint=rate_hint)
        self.last_sample_stats = stats
        return samples

    # -- freezing -----------------------------------------------------------

    def freeze(self, grid, seed=0, epoch=0, mirror=False):
        return FrozenModel(self, grid, seed=seed, epoch=epoch, mirror=mirror)

    def time_feature(self, ts):
        return 2.0 * (ts - self.t0) / self.T - 1.0


class FrozenModel:
    """Read-only view of a model for one simulated batch.

    Per-node normalizers, envelopes and sample clouds are computed once and
    shared by all particles.
    """

    def __init__(self, model, grid, seed=0, epoch=0, mirror=False):
        self.model = model
        self.grid = grid
        self.seed = seed
        self.epoch = epoch
        self.mirror = mirror
        self._scan = {}
        self._fields = {}
        self._acc = []

    def scan(self, m):
        if m not in self._scan:
            self._scan[m] = self.model.scan(self.grid.time(m))
        return self._scan[m]

    def field(self, m):
        if m not in self._fields:
            self._fields = {m: ModelField(self, m)}
        return self._fields[m]

    def record_acceptance(self, rate):
        self._acc.append(rate)

    def stats(self):
        return {"acceptance_rate": float(np.mean(self._acc)) if self._acc else float("nan")}


class ModelField:
    """The frozen measure at one time node, as seen by drift/diffusion closures."""

    def __init__(self, frozen, m):
        self.frozen = frozen
        self.model = frozen.model
        self.m = m
        self.t = frozen.grid.time(m)
        self._clouds = {}

    def density(self, x):
        if self.model.exact_density:
            return self.model.density(self.t, x)
        Z, _ = self.frozen.scan(self.m)
        return self.model.density(self.t, x, Z=Z)

    def grad(self, x):
        if not self.model.spatial_gradient:
            raise CapabilityError(f"{self.model.kind} model does not provide spatial gradients")
        x = as_points(x, self.model.dim)
        Z, _ = self.frozen.scan(self.m)
        g = self.model.grad_x(self.t, x)
        live = (self.model.raw(self.t, x) > 0.0) & self.model.domain.contains(x)
        return np.where(live[:, None], g / Z, 0.0)

    def cloud(self, n):
        if n not in self._clouds:
            rng = keyed_rng(self.frozen.seed, self.frozen.epoch, self.m, TAG_FIELD, n)
            if self.model.direct_sampling:
                pts = self.model.sample(self.t, n, rng)
                if self.frozen.mirror:
                    pts = -pts
            else:
                Z, mx = self.frozen.scan(self.m)
                env = ENVELOPE_SAFETY * mx
                pts = self.model.sample(self.t, n, rng, envelope=env, mirror=self.frozen.mirror,
                                        rate_hint=Z / (env * self.model.domain.volume))
                self.frozen.record_acceptance(self.model.last_sample_stats["acceptance_rate"])
            self._clouds[n] = pts
        return self._clouds[n]

    def mean(self, n):
        return self.cloud(n).mean(axis=0)


class EmpiricalField:
    """Particle cloud as a measure handle (used by the interacting baselines)."""

    def __init__(self, points, mollifier=None, weights=None):
        self.points = np.asarray(points, dtype=float)
        self.mollifier = mollifier
        self.measure = EmpiricalMeasure(self.points, weights)

    def density(self, x):
        if self.mollifier is None:
            raise CapabilityError("empirical field has no mollifier; density undefined")
        return kde_eval(self.measure, self.mollifier, x)

    def grad(self, x):
        raise CapabilityError("empirical field does not provide spatial gradients")

    def cloud(self, n=None):
        if self.measure.weights is not None and not np.allclose(self.measure.weights, self.measure.weights[0]):
            raise CapabilityError("weighted empirical field cannot be used as an equal-weight cloud")
        return self.points

    def mean(self, n=None):
        return self.measure.weights @ self.points
