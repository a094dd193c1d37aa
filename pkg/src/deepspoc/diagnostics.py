"""Error metrics, Wasserstein estimators and the a-posteriori error bound."""

import csv
import math

import numpy as np

from .errors import EmptyBatchError, HypothesisViolation, InvalidParameterError
from .sde import TAG_INIT, integrate, keyed_rng

METRICS_HEADER = ["epoch", "metric", "value", "stderr"]


def relative_l2(model_density, reference, domain, n_eval=100_000, scale=1.0, seed=0):
    """Monte Carlo ``||scale * rho - U|| / ||U||`` with uniform points on the box.

    ``model_density`` and ``reference`` are callables on (N, d) arrays.
    """
    if n_eval < 1:
        raise InvalidParameterError("need at least one evaluation point")
    pts = domain.uniform(np.random.default_rng(seed), n_eval)
    u = np.asarray(reference(pts), dtype=float)
    den = math.sqrt(float(u @ u))
    if den == 0.0:
        raise ZeroDivisionError("reference vanishes on every evaluation point")
    diff = scale * np.asarray(model_density(pts), dtype=float) - u
    return math.sqrt(float(diff @ diff)) / den


def _resample_sorted(a, n):
    a = np.sort(np.asarray(a, dtype=float).ravel())
    if a.size == n:
        return a
    return np.quantile(a, (np.arange(n) + 0.5) / n)


def wasserstein_1d(a, b, p=1):
    """Sorted-sample ``W_p``; unequal sizes are matched through empirical quantiles."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptyBatchError("Wasserstein distance of an empty sample")
    n = max(a.size, b.size)
    diff = np.abs(_resample_sorted(a, n) - _resample_sorted(b, n))
    return float(np.mean(diff**p) ** (1.0 / p))


def sliced_w2(a, b, n_directions=128, seed=0):
    """Root mean of squared 1-D W2 over random unit directions (an estimator, not exact W2)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptyBatchError("sliced distance of an empty sample")
    if n_directions < 1:
        raise InvalidParameterError("need at least one direction")
    dirs = np.random.default_rng(seed).standard_normal((n_directions, a.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    sq = [wasserstein_1d(a @ u, b @ u, p=2) ** 2 for u in dirs]
    return math.sqrt(float(np.mean(sq)))


def w2(a, b, n_directions=128, seed=0):
    a = np.atleast_2d(np.asarray(a, dtype=float).reshape(len(a), -1))
    if a.shape[1] == 1:
        return wasserstein_1d(a, b, p=2)
    return sliced_w2(a, b, n_directions, seed)


def density_cdf_w1(f, g, lo, hi, n=20_000):
    """``int |F - G|`` for 1-D densities on [lo, hi] (midpoint CDFs)."""
    x = lo + (hi - lo) * (np.arange(n) + 0.5) / n
    h = (hi - lo) / n
    F = np.cumsum(np.asarray(f(x), dtype=float)) * h
    G = np.cumsum(np.asarray(g(x), dtype=float)) * h
    return float(np.sum(np.abs(F - G)) * h)


def l1_distance(f, g, lo, hi, n=20_000):
    x = lo + (hi - lo) * (np.arange(n) + 0.5) / n
    return float(np.sum(np.abs(np.asarray(f(x)) - np.asarray(g(x)))) * (hi - lo) / n)


def second_moments(clouds):
    return np.array([float(np.mean(np.sum(np.atleast_2d(c) ** 2, axis=1))) for c in clouds])


def second_moment_slope(values, times):
    """Least-squares slope of second moments against time.

    ``values`` is either a 1-D array of moments or a sequence of point clouds.
    """
    times = np.asarray(times, dtype=float)
    if len(times) < 2:
        raise InvalidParameterError("need at least two time nodes")
    v = np.asarray(values, dtype=float) if np.ndim(values[0]) == 0 else second_moments(values)
    tc = times - times.mean()
    return float(tc @ (v - v.mean()) / (tc @ tc))


def phi_map(fields, problem, sampler, K_phi, grid, seed=0):
    """Node positions of the SDE with the measure flow frozen to ``fields``.

    ``fields[m]`` is the measure handle used at node m; ``sampler(n, rng)``
    draws the initial law. Returns an (M+1, K_phi, d) array.
    """
    x0 = np.asarray(sampler(K_phi, keyed_rng(seed, 0, 0, TAG_INIT)), dtype=float).reshape(K_phi, problem.dim)
    return integrate(problem, grid, x0, lambda m, _x: fields[m], problem.noise_source(seed), epoch=0)


def h_alpha(mu, nu, alpha, grid, n_directions=64, seed=0):
    """``(trapezoid over nodes of exp(-alpha (t - t0)) W2^2(mu_t, nu_t))^(1/2)``."""
    if not alpha > 0:
        raise InvalidParameterError("time weight must be positive")
    if len(mu) != grid.M + 1 or len(nu) != grid.M + 1:
        raise InvalidParameterError("measure sequences do not match the grid")
    s = grid.times - grid.t0
    vals = np.array([w2(mu[m], nu[m], n_directions, seed) ** 2 for m in range(grid.M + 1)]) * np.exp(-alpha * s)
    return math.sqrt(float(np.sum((vals[1:] + vals[:-1]) / 2.0) * grid.dt))


def contraction_constant(C_lip, T):
    return 2.0 * (T + 1.0) * C_lip**2


def contraction_factor(alpha, C_lip, T):
    C0 = contraction_constant(C_lip, T)
    if not alpha > C0:
        raise HypothesisViolation(f"time weight {alpha} must exceed {C0}")
    return math.sqrt(C0 / (alpha - C0))


def posterior_bound(h_self, alpha, C_lip, T):
    """``H_self / (1 - sqrt(C0 / (alpha - C0)))`` with ``C0 = 2 (T + 1) C^2``."""
    C0 = contraction_constant(C_lip, T)
    if not alpha > 2.0 * C0:
        raise HypothesisViolation(f"bound needs alpha > 2 C0 = {2.0 * C0}, got {alpha}")
    return h_self / (1.0 - math.sqrt(C0 / (alpha - C0)))


def gaussian_w2_isotropic(s1, s2, d):
    return math.sqrt(d) * abs(s1 - s2)


def write_metrics_csv(path, rows, append=False):
    """Rows are ``(epoch, metric, value, stderr)``."""
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if not append or fh.tell() == 0:
            w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow([r[0], r[1], repr(float(r[2])), repr(float(r[3])) if r[3] is not None else ""])


def write_density_slice(path, t, points, model_vals, ref_vals=None):
    points = np.atleast_2d(points)
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if fh.tell() == 0:
            w.writerow(["t"] + [f"x{k}" for k in range(points.shape[1])] + ["density_model", "density_reference"])
        for i in range(points.shape[0]):
            ref = "" if ref_vals is None else repr(float(ref_vals[i]))
            w.writerow([repr(float(t))] + [repr(float(v)) for v in points[i]] + [repr(float(model_vals[i])), ref])
