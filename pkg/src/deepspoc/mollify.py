"""Empirical measures of particle batches and their mollifications."""

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import kernels
from .errors import InvalidParameterError


@dataclass
class EmpiricalMeasure:
    points: np.ndarray  # (K, d)
    weights: np.ndarray = None  # (K,), uniform when omitted

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] < 1:
            raise InvalidParameterError("empirical measure needs at least one point")
        if not np.isfinite(self.points).all():
            raise InvalidParameterError("empirical measure has non-finite points")
        if self.weights is None:
            self.weights = np.full(self.points.shape[0], 1.0 / self.points.shape[0])
        else:
            self.weights = np.asarray(self.weights, dtype=float)

    @property
    def K(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]


@functools.lru_cache(maxsize=None)
def triangular_constant(d):
    """Normalizer C(d) of the cone kernel ``C/eps^d (1 - |x|/eps)_+``.

    Computed by radial quadrature of the unit-bandwidth cone over the unit
    ball: ``|S^{d-1}| * int_0^1 (1 - r) r^{d-1} dr``.
    """
    sphere = 2.0 * math.pi ** (d / 2.0) / special.gamma(d / 2.0)
    radial, _ = integrate.quad(lambda r: (1.0 - r) * r ** (d - 1), 0.0, 1.0, epsabs=1e-14, epsrel=1e-14)
    return 1.0 / (sphere * radial)


@dataclass(frozen=True)
class Mollifier:
    kind: str = "gaussian"
    eps: float = 0.01
    dim: int = 1

    def __post_init__(self):
        if self.kind not in ("gaussian", "triangular"):
            raise InvalidParameterError(f"unknown mollifier {self.kind!r}")
        if not self.eps > 0:
            raise InvalidParameterError(f"mollifier bandwidth must be positive, got {self.eps}")

    @property
    def cnorm(self):
        return triangular_constant(self.dim) if self.kind == "triangular" else 1.0

    @property
    def peak(self):
        if self.kind == "gaussian":
            return (2.0 * math.pi * self.eps**2) ** (-self.dim / 2.0)
        return self.cnorm / self.eps**self.dim

    def kernel(self, x):
        """Kernel value at offsets ``x`` (n, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r2 = (x**2).sum(-1)
        if self.kind == "gaussian":
            return self.peak * np.exp(-r2 / (2.0 * self.eps**2))
        return self.peak * np.clip(1.0 - np.sqrt(r2) / self.eps, 0.0, None)


def _as_queries(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x.reshape(-1, 1) if dim == 1 else x.reshape(1, -1)
    return x


def kde_eval(measure, moll, x, backend=None):
    """Mollified empirical density ``sum_i w_i f_eps(x - X_i)`` at ``x``."""
    if not moll.eps > 0:
        raise InvalidParameterError("mollifier bandwidth must be positive")
    q = _as_queries(x, measure.dim)
    return kernels.kde_sum(measure.points, measure.weights, q, moll.eps, moll.kind, moll.cnorm, backend=backend)


def truncate_particles(measure, half_width, eps):
    """Send particles outside ``[-(L-eps), L-eps]^d`` to the origin.

    Returns the truncated measure and the number of particles moved.
    """
    inner = half_width - eps
    if not inner > 0:
        raise InvalidParameterError(f"inner box is empty: L={half_width}, eps={eps}")
    pts = measure.points
    inside = (np.abs(pts) <= inner).all(axis=1)
    out = np.where(inside[:, None], pts, 0.0)
    return EmpiricalMeasure(out, measure.weights.copy()), int((~inside).sum())


def batch_kde_table(ensemble, moll, query_sets, backend=None):
    """KDE of every time node of ``ensemble`` at that node's query points.

    ``query_sets`` is either one (N, d) array shared by all nodes or a
    sequence with one array per node. Returns a list of 1-D arrays; the values
    are plain data, not connected to any model parameter.
    """
    n_nodes = ensemble.positions.shape[0]
    shared = isinstance(query_sets, np.ndarray) and query_sets.ndim == 2
    table = []
    for m in range(n_nodes):
        q = query_sets if shared else query_sets[m]
        if len(q) == 0:
            raise InvalidParameterError(f"query set for node {m} is empty")
        table.append(kde_eval(EmpiricalMeasure(ensemble.positions[m]), moll, q, backend=backend))
    return table
