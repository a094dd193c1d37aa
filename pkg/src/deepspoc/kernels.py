"""Hot inner loops: kernel sums and singular-kernel convolutions.

Every kernel exists twice, a numba version (``*_nb``) and a pure numpy version
(``*_np``). The dispatchers at the bottom pick one according to
:data:`deepspoc._accel.USE_NUMBA`; tests run both and compare.
"""

import math

import numpy as np

from . import _accel
from ._accel import njit

# Gaussian terms farther than this many bandwidths along the sort axis are
# skipped; each dropped term is below exp(-40.5) ~ 3e-18 of the peak.
GAUSS_CUTOFF = 9.0

_CHUNK = 2048


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit
def _kde_nb(points, weights, queries, eps, kind, cnorm):
    # points must be sorted along coordinate 0
    n, d = points.shape
    nq = queries.shape[0]
    out = np.zeros(nq)
    key = points[:, 0]
    if kind == 0:
        inv = 0.5 / (eps * eps)
        norm = (2.0 * math.pi * eps * eps) ** (-0.5 * d)
        cut = GAUSS_CUTOFF * eps
    else:
        norm = cnorm / eps**d
        cut = eps
    for j in range(nq):
        q0 = queries[j, 0]
        lo = np.searchsorted(key, q0 - cut)
        hi = np.searchsorted(key, q0 + cut, side="right")
        s = 0.0
        for i in range(lo, hi):
            r2 = 0.0
            for k in range(d):
                diff = queries[j, k] - points[i, k]
                r2 += diff * diff
            if kind == 0:
                s += weights[i] * math.exp(-r2 * inv)
            else:
                r = math.sqrt(r2)
                if r < eps:
                    s += weights[i] * (1.0 - r / eps)
        out[j] = s * norm
    return out


@njit
def _ks_conv_nb(x, cloud, cd, delta):
    n, d = x.shape
    ng = cloud.shape[0]
    out = np.zeros((n, d))
    clamps = 0
    diff = np.empty(d)
    for i in range(n):
        for j in range(ng):
            r2 = 0.0
            for k in range(d):
                diff[k] = x[i, k] - cloud[j, k]
                r2 += diff[k] * diff[k]
            if r2 == 0.0:
                clamps += 1
                continue
            r = math.sqrt(r2)
            if r < delta:
                clamps += 1
                for k in range(d):
                    diff[k] *= delta / r
                r = delta
            if d == 2:
                f = 1.0 / (2.0 * math.pi * r * r)
            else:
                f = cd * (d - 2) / r**d
            for k in range(d):
                out[i, k] += f * diff[k]
    for i in range(n):
        for k in range(d):
            out[i, k] /= ng
    return out, clamps


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------


def _kde_np(points, weights, queries, eps, kind, cnorm):
    d = points.shape[1]
    out = np.empty(queries.shape[0])
    for s in range(0, queries.shape[0], _CHUNK):
        q = queries[s : s + _CHUNK]
        r2 = ((q[:, None, :] - points[None, :, :]) ** 2).sum(-1)
        if kind == 0:
            kern = np.exp(-r2 / (2.0 * eps * eps)) * (2.0 * np.pi * eps * eps) ** (-0.5 * d)
        else:
            kern = np.clip(1.0 - np.sqrt(r2) / eps, 0.0, None) * (cnorm / eps**d)
        out[s : s + _CHUNK] = kern @ weights
    return out


def _ks_conv_np(x, cloud, cd, delta):
    d = x.shape[1]
    out = np.zeros_like(x, dtype=float)
    clamps = 0
    for s in range(0, x.shape[0], _CHUNK // 4):
        diff = x[s : s + _CHUNK // 4, None, :] - cloud[None, :, :]
        r = np.sqrt((diff**2).sum(-1))
        zero = r == 0.0
        small = r < delta
        clamps += int(small.sum())
        rc = np.where(small, delta, r)
        diff = np.where(small[..., None] & ~zero[..., None], diff * (delta / np.where(zero, 1.0, r))[..., None], diff)
        if d == 2:
            f = 1.0 / (2.0 * np.pi * rc**2)
        else:
            f = cd * (d - 2) / rc**d
        f = np.where(zero, 0.0, f)
        out[s : s + _CHUNK // 4] = (f[..., None] * diff).sum(1)
    return out / cloud.shape[0], clamps


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

KIND_CODES = {"gaussian": 0, "triangular": 1}


def kde_sum(points, weights, queries, eps, kind="gaussian", cnorm=1.0, backend=None):
    """Weighted kernel sum ``sum_i w_i k_eps(q - X_i)`` at every query row.

    ``points`` is (K, d), ``weights`` (K,), ``queries`` (Q, d).
    """
    points = np.ascontiguousarray(points, dtype=float)
    queries = np.ascontiguousarray(queries, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    code = KIND_CODES[kind]
    if points.shape[0] == 0 or queries.shape[0] == 0:
        return np.zeros(queries.shape[0])
    if _use_numba(backend):
        order = np.argsort(points[:, 0], kind="stable")
        return _kde_nb(points[order], weights[order], queries, float(eps), code, float(cnorm))
    return _kde_np(points, weights, queries, float(eps), code, float(cnorm))


def ks_convolution(x, cloud, cd, delta, backend=None):
    """Mean of the Keller-Segel kernel gradient over a sample cloud.

    Returns ``(conv, clamps)`` with conv[i] = mean_j gradW(x_i - y_j).
    """
    x = np.ascontiguousarray(x, dtype=float)
    cloud = np.ascontiguousarray(cloud, dtype=float)
    if _use_numba(backend):
        return _ks_conv_nb(x, cloud, float(cd), float(delta))
    return _ks_conv_np(x, cloud, float(cd), float(delta))


def _use_numba(backend):
    if backend is None:
        return _accel.USE_NUMBA
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend == "numba" and _accel.HAVE_NUMBA
