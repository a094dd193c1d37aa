"""Benchmark mean-field problems: drift/diffusion closures and reference objects.

Closures have the signature ``f(t, x, field)`` where ``field`` is the frozen
measure handle of the current time node (see
:class:`deepspoc.models.base.ModelField`); they return per-particle values
for the Euler scheme.
"""

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from . import kernels
from .errors import InvalidParameterError
from .models.base import Domain, accept_reject
from .sde import NoiseSource

PME_M = 3.0
PME_C = math.sqrt(3.0) / 15.0


@dataclass
class ProblemSpec:
    name: str
    dim: int
    drift: Optional[Callable] = None
    diffusion: Optional[Callable] = None
    noise: str = "brownian"
    alpha: float = 2.0
    sample_initial: Optional[Callable] = None
    initial_density: Optional[Callable] = None
    reference: Optional[Callable] = None
    reference_scale: float = 1.0
    t0: float = 0.0
    params: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)

    def noise_source(self, seed=0, mirror=False):
        return NoiseSource(self.noise, self.dim, self.alpha, seed, mirror)


def unit_ball_volume(d):
    return math.pi ** (d / 2.0) / special.gamma(d / 2.0 + 1.0)


# ---------------------------------------------------------------------------
# porous medium
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BarenblattParams:
    m: float = PME_M
    C: float = PME_C
    d: int = 1

    def __post_init__(self):
        if not self.m > 1 or not self.C > 0 or self.d < 1:
            raise InvalidParameterError(f"Barenblatt needs m > 1, C > 0, d >= 1; got {self}")

    @property
    def alpha(self):
        return self.d / (self.d * (self.m - 1.0) + 2.0)

    @property
    def beta(self):
        return self.alpha / self.d

    @property
    def k(self):
        return (self.m - 1.0) / (2.0 * self.m) * self.beta

    @property
    def c0(self):
        return barenblatt_mass(self.m, self.C, self.d)

    @property
    def nu(self):
        return self.c0 ** (self.m - 1.0)

    def support_radius(self, t):
        return math.sqrt(self.C / self.k) * t**self.beta

    def __call__(self, t, x):
        return barenblatt_eval(self, t, x)

    def normalized(self, t, x):
        return barenblatt_eval(self, t, x) / self.c0

    def sample(self, t, n, rng):
        """Draw from the normalized profile at time ``t`` (accept-reject on its support box)."""
        R = self.support_radius(t)
        box = Domain.box(R, self.d)
        peak = float(barenblatt_eval(self, t, np.zeros((1, self.d)))[0])
        pts, _ = accept_reject(lambda x: barenblatt_eval(self, t, x), box, n, rng, peak * (1.0 + 1e-12))
        return pts


@functools.lru_cache(maxsize=None)
def barenblatt_mass(m, C, d, t=1.0):
    """Integral of the Barenblatt profile over R^d (radial quadrature)."""
    p = BarenblattParams(m, C, d)
    R = p.support_radius(t)
    sphere = 2.0 * math.pi ** (d / 2.0) / special.gamma(d / 2.0)
    a, b = p.alpha, p.beta

    def radial(r):
        return r ** (d - 1) * max(C - p.k * r * r / t ** (2 * b), 0.0) ** (1.0 / (m - 1.0))

    val, _ = integrate.quad(radial, 0.0, R, epsabs=1e-14, epsrel=1e-13, limit=200)
    return sphere * t ** (-a) * val


def barenblatt_eval(p, t, x):
    """``t^-a [(C - k |x|^2 / t^(2b))_+]^(1/(m-1))``."""
    if not np.all(np.asarray(t) > 0):
        raise InvalidParameterError("Barenblatt profile is defined for t > 0 only")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != p.d and p.d == 1:
        x = x.reshape(-1, 1)
    r2 = (x**2).sum(axis=1)
    core = np.maximum(p.C - p.k * r2 / np.asarray(t) ** (2.0 * p.beta), 0.0)
    return np.asarray(t) ** (-p.alpha) * core ** (1.0 / (p.m - 1.0))


def pme_sigma(rho, m, nu):
    """Diffusion coefficient ``sqrt(2 nu) rho^((m-1)/2)`` of the PME particle SDE."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise InvalidParameterError("pme_sigma needs a nonnegative (rectified) density")
    return math.sqrt(2.0 * nu) * rho ** ((m - 1.0) / 2.0)


def pme_ode_drift(rho, grad_rho, m, nu):
    """Velocity ``-nu m rho^(m-2) grad rho`` of the deterministic PME particles.

    The sign makes particles move down the pressure gradient, which is what
    transports the density according to the PME.
    """
    rho = np.asarray(rho, dtype=float)
    grad_rho = np.atleast_2d(grad_rho)
    if m == 2.0:
        fac = np.ones_like(rho)
    else:
        fac = np.where(rho > 0, np.maximum(rho, 0.0) ** (m - 2.0), 0.0)
    return -nu * m * fac[:, None] * grad_rho


def pme_problem(dim=1, t0=1.0, m=PME_M, C=PME_C, deterministic=False):
    p = BarenblattParams(m, C, dim)
    nu = p.nu

    def diffusion(t, x, fld):
        return pme_sigma(fld.density(x), m, nu)

    def drift(t, x, fld):
        # fld.grad raises CapabilityError for relu networks
        return pme_ode_drift(fld.density(x), fld.grad(x), m, nu)

    return ProblemSpec(
        name=f"pme{dim}d" + ("_ode" if deterministic else ""),
        dim=dim,
        drift=drift if deterministic else None,
        diffusion=None if deterministic else diffusion,
        noise="none" if deterministic else "brownian",
        sample_initial=lambda n, rng: p.sample(t0, n, rng),
        initial_density=lambda x: p.normalized(t0, x),
        reference=lambda t, x: barenblatt_eval(p, t, x),
        reference_scale=p.c0,
        t0=t0,
        params={"m": m, "C": C, "nu": nu, "c0": p.c0, "barenblatt": p},
    )


# ---------------------------------------------------------------------------
# Keller-Segel
# ---------------------------------------------------------------------------


def ks_constant(d):
    return 1.0 / (d * (d - 2) * unit_ball_volume(d)) if d >= 3 else 1.0 / (2.0 * math.pi)


def ks_grad_W(x, d=None, delta=1e-3):
    """Gradient of the attractive kernel; returns ``(grad, clamp_count)``.

    Distances below ``delta`` are raised to ``delta`` along the same
    direction; an exact zero offset contributes zero.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x.shape[1] if d is None else d
    return kernels.ks_convolution(x, np.zeros((1, d)), ks_constant(d), delta, backend="numpy")


def ks_drift(x, cloud, delta=1e-3, backend=None):
    """``-(1/N_g) sum_i gradW(x - x_i)``; returns ``(drift, clamp_count)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x.shape[1]
    conv, clamps = kernels.ks_convolution(x, cloud, ks_constant(d), delta, backend=backend)
    return -conv, clamps


def ks_gauss_sampler(dim=2, var=0.18, centers=None, weights=None):
    centers = np.zeros((1, dim)) if centers is None else np.asarray(centers, dtype=float)
    weights = np.ones(1) if weights is None else np.asarray(weights, dtype=float)

    def sample(n, rng):
        comp = rng.choice(len(weights), size=n, p=weights / weights.sum())
        return centers[comp] + math.sqrt(var) * rng.standard_normal((n, dim))

    def density(x):
        x = np.atleast_2d(x)
        out = np.zeros(x.shape[0])
        for c, w in zip(centers, weights / weights.sum()):
            out += w * np.exp(-((x - c) ** 2).sum(1) / (2 * var)) / (2 * math.pi * var) ** (dim / 2)
        return out

    return sample, density


def ks_problem(init="gauss", n_conv=500, delta=1e-3, per_particle=False):
    """2-D Keller-Segel with Gaussian or two-bump initial data."""
    if init == "gauss":
        sample, dens = ks_gauss_sampler()
    elif init == "mix":
        sample, dens = ks_gauss_sampler(centers=[[-1.5, 0.0], [1.0, 0.0]], weights=[1.0 / 3.0, 2.0 / 3.0])
    else:
        raise InvalidParameterError(f"unknown Keller-Segel initial condition {init!r}")
    spec = ProblemSpec(name=f"ks2d_{init}", dim=2, noise="brownian", sample_initial=sample, initial_density=dens,
                       params={"n_conv": n_conv, "delta": delta, "per_particle": per_particle})
    spec.counters["ks_clamps"] = 0

    def drift(t, x, fld):
        if per_particle:
            big = fld.cloud(n_conv * x.shape[0]).reshape(x.shape[0], n_conv, -1)
            out = np.empty_like(x)
            for i in range(x.shape[0]):
                out[i : i + 1], c = ks_drift(x[i : i + 1], big[i], delta)
                spec.counters["ks_clamps"] += c
            return out
        out, c = ks_drift(x, fld.cloud(n_conv), delta)
        spec.counters["ks_clamps"] += c
        return out

    spec.drift = drift
    spec.diffusion = lambda t, x, fld: math.sqrt(2.0)
    return spec


KS_SLOPE = 4.0 * (1.0 - 1.0 / (8.0 * math.pi))


# ---------------------------------------------------------------------------
# Curie-Weiss
# ---------------------------------------------------------------------------


def cw_drift(x, mean, beta=1.0, coupling=-0.1):
    x = np.asarray(x, dtype=float)
    return -beta * (x**3 - x) + beta * coupling * np.asarray(mean, dtype=float)


def cw_unnormalized(x, beta=1.0):
    x2 = np.square(np.asarray(x, dtype=float))  # squaring first keeps p*(x) == p*(-x) bit-exact
    return np.exp(-2.0 * beta * (x2 * x2 / 4.0 - x2 / 2.0))


@functools.lru_cache(maxsize=None)
def cw_normalizer(beta=1.0):
    val, _ = integrate.quad(lambda x: float(cw_unnormalized(x, beta)), -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13)
    return val


def cw_invariant_density(x, beta=1.0):
    return cw_unnormalized(x, beta) / cw_normalizer(beta)


def cw_problem(beta=1.0, coupling=-0.1, mean_samples=100, mean0=1.0):
    def drift(t, x, fld):
        return cw_drift(x, fld.mean(mean_samples), beta, coupling)

    return ProblemSpec(
        name="cw1d",
        dim=1,
        drift=drift,
        diffusion=lambda t, x, fld: 1.0,
        sample_initial=lambda n, rng: mean0 + rng.standard_normal((n, 1)),
        initial_density=lambda x: np.exp(-0.5 * (np.ravel(x) - mean0) ** 2) / math.sqrt(2 * math.pi),
        params={"beta": beta, "coupling": coupling, "mean_samples": mean_samples},
    )


# ---------------------------------------------------------------------------
# fractional porous medium
# ---------------------------------------------------------------------------


def fpme_sigma(rho, m, alpha):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise InvalidParameterError("fpme_sigma needs a nonnegative (rectified) density")
    return rho ** ((m - 1.0) / alpha)


def fpme_problem(alpha=1.0, m=2.0, init_time=1.0):
    """1-D FPME driven by symmetric alpha-stable noise.

    The initial law is the normalized PME Barenblatt profile at ``init_time``.
    """
    p = BarenblattParams(PME_M, PME_C, 1)
    return ProblemSpec(
        name="fpme1d",
        dim=1,
        diffusion=lambda t, x, fld: fpme_sigma(fld.density(x), m, alpha),
        noise="alpha_stable",
        alpha=alpha,
        sample_initial=lambda n, rng: p.sample(init_time, n, rng),
        initial_density=lambda x: p.normalized(init_time, x),
        params={"m": m, "alpha": alpha, "init_time": init_time, "barenblatt": p},
    )


# ---------------------------------------------------------------------------
# linear mean-reverting test problem
# ---------------------------------------------------------------------------


def linear_problem(mean_samples=1000, mean0=1.0, var0=1.0):
    """``dX = (-X + E X) dt + dB``; Lipschitz constant 1 in (x, W2)."""
    return ProblemSpec(
        name="linear1d",
        dim=1,
        drift=lambda t, x, fld: -x + fld.mean(mean_samples),
        diffusion=lambda t, x, fld: 1.0,
        sample_initial=lambda n, rng: mean0 + math.sqrt(var0) * rng.standard_normal((n, 1)),
        params={"C_lip": 1.0, "mean_samples": mean_samples},
    )


def zero_problem(dim=1, sampler=None):
    """No drift, no noise: particles stay put. Used by tests and smoke runs."""
    sampler = sampler or (lambda n, rng: rng.standard_normal((n, dim)))
    return ProblemSpec(name="zero", dim=dim, noise="none", sample_initial=sampler)
