"""Spectral density model: one cosine-basis coefficient vector per time node.

Basis on ``[-L, L]`` per axis: ``phi_0 = 1/sqrt(2L)`` and
``phi_k(x) = cos(k pi (x + L) / (2L)) / sqrt(L)``; d-dimensional basis
functions are tensor products, flattened in C order. The model is updated in
closed form (:func:`fourier_update`) rather than by the gradient engine.
"""

import math

import numpy as np

from ..errors import ConfigurationError, InvalidParameterError
from ..mollify import EmpiricalMeasure, kde_eval, truncate_particles
from .base import DensityModel, Domain, as_points, as_times


def basis_1d(x, L, n_modes):
    """(len(x), n_modes) matrix of the 1-D basis functions at ``x``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    k = np.arange(n_modes)
    B = np.cos(np.outer(x + L, k) * (math.pi / (2.0 * L))) / math.sqrt(L)
    B[:, 0] = 1.0 / math.sqrt(2.0 * L)
    return B


def basis_eval(x, L, n_modes):
    """(N, n_modes**d) matrix of tensor basis functions at the rows of ``x``."""
    x = np.atleast_2d(x)
    out = basis_1d(x[:, 0], L, n_modes)
    for k in range(1, x.shape[1]):
        Bk = basis_1d(x[:, k], L, n_modes)
        out = (out[:, :, None] * Bk[:, None, :]).reshape(x.shape[0], -1)
    return out


def quad_grid_1d(L, Q):
    return -L + (2.0 * L) * (np.arange(Q) + 0.5) / Q


def _contract(vals, mats):
    """Apply ``mats[k].T`` along axis k of the tensor ``vals``."""
    out = vals
    for k, B in enumerate(mats):
        out = np.moveaxis(np.tensordot(out, B, axes=([k], [0])), -1, k)
    return out


def fourier_project(f, L, dim, n_modes, quad_points=None):
    """Coefficients ``<f, e_nu>`` by tensorized midpoint quadrature.

    ``f`` is either a callable on (N, d) points or the array of its values on
    the midpoint grid (shape ``(Q,) * d``).
    """
    Q = int(quad_points) if quad_points is not None else max(4 * n_modes, 256)
    if Q < 2 * n_modes:
        raise ConfigurationError(f"quadrature with {Q} points per axis cannot resolve {n_modes} modes")
    g = quad_grid_1d(L, Q)
    if callable(f):
        mesh = np.meshgrid(*([g] * dim), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        vals = np.asarray(f(pts), dtype=float).reshape((Q,) * dim)
    else:
        vals = np.asarray(f, dtype=float)
        if vals.shape != (Q,) * dim:
            raise ConfigurationError(f"value grid shape {vals.shape} != {(Q,) * dim}")
    B = basis_1d(g, L, n_modes) * (2.0 * L / Q)
    return _contract(vals, [B] * dim).reshape(-1)


def fourier_update(theta, projected, alpha, allow_zero=False):
    """Closed-form step ``(1 - 2 alpha) theta + 2 alpha P_N(kde)``."""
    if not (0.0 < alpha <= 0.5 or (allow_zero and alpha == 0.0)):
        raise InvalidParameterError(f"Fourier update rate must lie in (0, 1/2], got {alpha}")
    return (1.0 - 2.0 * alpha) * np.asarray(theta) + 2.0 * alpha * np.asarray(projected)


class FourierDensity(DensityModel):
    kind = "fourier"

    def __init__(self, L, dim, n_modes, grid, quad_points=None, scan_points=512, mollifier=None, truncate=True):
        super().__init__(Domain.box(L, dim), grid.t0, grid.T, scan_points)
        self.L = float(L)
        self.n_modes = int(n_modes)
        self.grid = grid
        self.quad_points = int(quad_points) if quad_points is not None else max(4 * self.n_modes, 256)
        if self.quad_points < 2 * self.n_modes:
            raise ConfigurationError(f"quadrature with {self.quad_points} points cannot resolve {n_modes} modes")
        self.n_basis = self.n_modes**dim
        self.mollifier = mollifier
        self.truncate = truncate
        self._flat = np.zeros((grid.M + 1) * self.n_basis)
        self.last_truncated = 0

    @property
    def theta(self):
        return self._flat.reshape(self.grid.M + 1, self.n_basis)

    def node_index(self, t):
        m = np.rint((np.asarray(t, dtype=float) - self.grid.t0) / self.grid.dt).astype(int)
        if np.any(m < 0) or np.any(m > self.grid.M):
            raise InvalidParameterError("time outside the Fourier model's grid")
        return m

    def raw(self, t, x):
        x = as_points(x, self.dim)
        ms = self.node_index(as_times(t, x.shape[0]))
        out = np.empty(x.shape[0])
        for m in np.unique(ms):
            sel = ms == m
            out[sel] = basis_eval(x[sel], self.L, self.n_modes) @ self.theta[m]
        return out

    def raw_grad(self, t, x, weights):
        x = as_points(x, self.dim)
        ms = self.node_index(as_times(t, x.shape[0]))
        if callable(weights):
            weights = weights(self.raw(t, x), slice(None))
        w = np.asarray(weights, dtype=float).reshape(-1)
        grad = np.zeros_like(self.theta)
        out = np.empty(x.shape[0])
        for m in np.unique(ms):
            sel = ms == m
            B = basis_eval(x[sel], self.L, self.n_modes)
            out[sel] = B @ self.theta[m]
            grad[m] += w[sel] @ B
        return out, grad.reshape(-1)

    # -- projections of particle batches ------------------------------------

    def quad_mesh(self):
        g = quad_grid_1d(self.L, self.quad_points)
        mesh = np.meshgrid(*([g] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def project_measure(self, measure, backend=None):
        """``P_N`` of the mollified (optionally truncated) empirical measure."""
        if self.mollifier is None:
            raise ConfigurationError("Fourier model needs a mollifier to project particle batches")
        if self.truncate:
            measure, moved = truncate_particles(measure, self.L, self.mollifier.eps)
            self.last_truncated += moved
        vals = kde_eval(measure, self.mollifier, self.quad_mesh(), backend=backend)
        return fourier_project(vals.reshape((self.quad_points,) * self.dim), self.L, self.dim, self.n_modes,
                               self.quad_points)

    def project_ensemble(self, ensemble, backend=None):
        self.last_truncated = 0
        return np.stack([self.project_measure(EmpiricalMeasure(ensemble.positions[m]), backend)
                         for m in range(self.grid.M + 1)])

    def init_from_points(self, points):
        coef = self.project_measure(EmpiricalMeasure(points))
        self.theta[:] = coef[None, :]

    def update(self, projected, alpha, allow_zero=False):
        self.theta[:] = fourier_update(self.theta, projected, alpha, allow_zero=allow_zero)

    def config(self):
        return {"L": self.L, "n_modes": self.n_modes, "quad_points": self.quad_points}
