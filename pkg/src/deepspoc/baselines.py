"""Reference particle solvers: the interacting system and batch-by-batch SPoC."""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBatchError, InvalidParameterError
from .models.base import EmpiricalField
from .mollify import EmpiricalMeasure, kde_eval
from .sde import TAG_INIT, integrate, keyed_rng


@dataclass
class PocResult:
    snapshots: dict  # node -> (K, d) positions
    grid: object
    mollifier: object = None

    def density(self, m, x, backend=None):
        return kde_eval(EmpiricalMeasure(self.snapshots[m]), self.mollifier, x, backend=backend)


def baseline_poc(problem, K, grid, mollifier=None, seed=0, keep_nodes=None, x0=None):
    """All-pairs interacting particle system.

    Every particle sees the empirical measure of the whole cloud (mollified
    when the coefficients depend on a density). ``keep_nodes`` limits storage
    to the listed nodes; by default all nodes are kept.
    """
    if K < 2:
        raise EmptyBatchError("the interacting system needs at least two particles")
    if x0 is None:
        x0 = problem.sample_initial(K, keyed_rng(seed, 0, 0, TAG_INIT))
    x0 = np.asarray(x0, dtype=float).reshape(K, problem.dim)
    keep = range(grid.M + 1) if keep_nodes is None else keep_nodes

    def field_at(m, x):
        return EmpiricalField(x, mollifier)

    snaps = integrate(problem, grid, x0, field_at, problem.noise_source(seed), epoch=0, keep_nodes=keep)
    return PocResult(snaps, grid, mollifier)


@dataclass
class SpocMixture:
    """Explicit mixture ``mu^n = (1 - a_n) mu^{n-1} + a_n muhat^n`` per node.

    ``batches[l]`` is an (M+1, K, d) array, ``weights[l]`` its mixture weight;
    ``initial`` (M+1, K0, d) carries the residual weight ``w0``.
    """

    initial: np.ndarray
    batches: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    w0: float = 1.0

    def add(self, positions, alpha):
        if not 0.0 < alpha <= 1.0:
            raise InvalidParameterError(f"SPoC rate must lie in (0, 1], got {alpha}")
        self.weights = [w * (1.0 - alpha) for w in self.weights]
        self.w0 *= 1.0 - alpha
        self.batches.append(np.asarray(positions, dtype=float))
        self.weights.append(alpha)

    def total_weight(self):
        return self.w0 + float(np.sum(self.weights))

    def measure(self, m):
        pts, wts = [], []
        if self.w0 > 0:
            pts.append(self.initial[m])
            wts.append(np.full(self.initial.shape[1], self.w0 / self.initial.shape[1]))
        for b, w in zip(self.batches, self.weights):
            if w > 0:
                pts.append(b[m])
                wts.append(np.full(b.shape[1], w / b.shape[1]))
        return EmpiricalMeasure(np.concatenate(pts), np.concatenate(wts))


def baseline_spoc(problem, K, n_batches, rates, grid, mollifier, seed=0):
    """Batch-by-batch SPoC: each batch interacts with the running mixture."""
    if len(rates) < n_batches:
        raise InvalidParameterError("need one rate per batch")
    x_init = problem.sample_initial(K, keyed_rng(seed, 0, 0, TAG_INIT, 1))
    mix = SpocMixture(np.broadcast_to(x_init, (grid.M + 1, K, problem.dim)).copy())
    for n in range(n_batches):
        def field_at(m, _x, mix=mix):
            meas = mix.measure(m)
            return EmpiricalField(meas.points, mollifier, meas.weights)

        x0 = problem.sample_initial(K, keyed_rng(seed, n, 0, TAG_INIT))
        paths = integrate(problem, grid, x0, field_at, problem.noise_source(seed), epoch=n)
        mix.add(paths, rates[n])
    return mix

