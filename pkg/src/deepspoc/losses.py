"""Training losses. Each returns the loss value and its parameter gradient.

KDE targets and importance weights are plain arrays, so no gradient flows
through them.
"""

import numpy as np

from .errors import CapabilityError, EmptyBatchError, NumericError


def _stack(grid, nodes, sets):
    for m, s in zip(nodes, sets):
        if len(s) == 0:
            raise EmptyBatchError(f"training set for node {m} is empty")
    ts = np.concatenate([np.full(len(s), grid.time(m)) for m, s in zip(nodes, sets)])
    xs = np.concatenate([np.asarray(s, dtype=float) for s in sets])
    sizes = np.concatenate([np.full(len(s), float(len(s))) for s in sets])
    return ts, xs, sizes


def loss_sq(model, grid, nodes, sets, table, scale=1.0):
    """``scale * sum_m (1/|S_m|) sum_x (rho(t_m, x) - kde_m(x))^2`` on the raw model output."""
    ts, xs, sizes = _stack(grid, nodes, sets)
    target = np.concatenate([np.asarray(v, dtype=float) for v in table])

    def weights(vals, sl):
        return scale * 2.0 * (vals - target[sl]) / sizes[sl]

    vals, grad = model.raw_grad(ts, xs, weights)
    r = vals - target
    return scale * float(np.sum(r * r / sizes)), grad


def loss_kl(model, grid, nodes, sets, table, eta=None, floor=1e-12, scale=1.0):
    """``-scale * sum_m (1/N_m) sum_x [kde_m(x) / eta_m(x)] log R(rho)(t_m, x)``.

    ``eta`` is None (uniform sampling, constant absorbed) or per-node arrays of
    the sampling density at the training points. Returns
    ``(value, grad, clamped_count)``.
    """
    ts, xs, sizes = _stack(grid, nodes, sets)
    target = np.concatenate([np.asarray(v, dtype=float) for v in table])
    ratio = target if eta is None else target / np.concatenate([np.asarray(e, dtype=float) for e in eta])
    w = -scale * ratio / sizes
    vals, grad, clamped = model.log_density_grad(ts, xs, w, floor=floor)
    return float(w @ vals), grad, clamped


def loss_path(model, positions, grid, nodes=None, scale=1.0):
    """``-scale * sum_m (1/K) sum_i log rho(t_m, X_i)`` over particle positions (M+1, K, d)."""
    if not getattr(model, "exact_density", False):
        raise CapabilityError("the path loss needs a model with an exact density")
    nodes = range(positions.shape[0]) if nodes is None else nodes
    nodes = list(nodes)
    K = positions.shape[1]
    ts = np.concatenate([np.full(K, grid.time(m)) for m in nodes])
    xs = np.concatenate([positions[m] for m in nodes])
    w = np.full(len(ts), -scale / K)
    vals = model.log_density(ts, xs)
    bad = ~np.isfinite(vals)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise NumericError(f"non-finite log-density for particle {j % K} at node {nodes[j // K]}")
    vals, grad, _ = model.log_density_grad(ts, xs, w)
    return float(w @ vals), grad
