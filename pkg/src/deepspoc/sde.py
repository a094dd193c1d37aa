"""Time grids, noise increments and the Euler-Maruyama particle simulator.

Random streams are keyed by ``(seed, epoch, node, tag)`` through
:class:`numpy.random.SeedSequence` and a Philox generator, so a run is
reproducible bit for bit and does not depend on how particles are split across
workers: the increment of particle ``i`` at node ``m`` is row ``i`` of the
node's draw.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUpError, DimensionError, EmptyBatchError, InvalidParameterError

# stream tags
TAG_NOISE = 0
TAG_FIELD = 1
TAG_INIT = 2
TAG_TRAIN = 3
TAG_MISC = 4


def keyed_rng(seed, *key):
    """Counter-based generator for the stream ``(seed, *key)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in key]])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    M: int

    def __post_init__(self):
        if int(self.M) < 1:
            raise InvalidParameterError(f"TimeGrid needs M >= 1, got {self.M}")
        if not self.T > 0:
            raise InvalidParameterError(f"TimeGrid needs T > 0, got {self.T}")

    @classmethod
    def from_step(cls, t0, T, dt):
        M = int(round(T / dt))
        if M < 1 or not math.isclose(M * dt, T, rel_tol=1e-9, abs_tol=1e-12):
            raise InvalidParameterError(f"dt={dt} does not divide T={T}")
        return cls(float(t0), float(T), M)

    @property
    def dt(self):
        return self.T / self.M

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.M + 1)

    def time(self, m):
        return self.t0 + m * self.dt

    def to_dict(self):
        return {"t0": self.t0, "T": self.T, "M": self.M}


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------


def cauchy_from_uniform(u):
    """Standard Cauchy variate by inverse CDF, ``tan(pi (u - 1/2))``."""
    return np.tan(np.pi * (np.asarray(u) - 0.5))


def standard_symmetric_stable(alpha, size, rng):
    """Symmetric alpha-stable draws with unit scale (Chambers-Mallows-Stuck).

    The characteristic function is ``exp(-|k|^alpha)``; alpha=2 gives N(0, 2)
    and alpha=1 the standard Cauchy law.
    """
    if not 0.0 < alpha <= 2.0:
        raise InvalidParameterError(f"stability index must lie in (0, 2], got {alpha}")
    u = rng.random(size)
    if alpha == 1.0:
        return cauchy_from_uniform(u)
    v = np.pi * (u - 0.5)
    w = rng.standard_exponential(size)
    return (
        np.sin(alpha * v)
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos(v - alpha * v) / w) ** ((1.0 - alpha) / alpha)
    )


@dataclass
class NoiseSource:
    kind: str = "brownian"
    dim: int = 1
    alpha: float = 2.0
    seed: int = 0
    mirror: bool = False

    def __post_init__(self):
        if self.kind not in ("brownian", "alpha_stable", "none"):
            raise InvalidParameterError(f"unknown noise kind {self.kind!r}")
        if self.kind == "alpha_stable" and not 0.0 < self.alpha < 2.0:
            raise InvalidParameterError(f"alpha-stable noise needs alpha in (0, 2), got {self.alpha}")


def sample_increment(src, dt, n, epoch=0, node=0):
    """Increment matrix (n x d) of the driving process over a step ``dt``."""
    if not dt > 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    if n < 1:
        raise InvalidParameterError(f"need at least one increment, got n={n}")
    shape = (int(n), src.dim)
    if src.kind == "none":
        return np.zeros(shape)
    rng = keyed_rng(src.seed, epoch, node, TAG_NOISE)
    if src.kind == "brownian":
        dz = rng.standard_normal(shape) * math.sqrt(dt)
    else:
        dz = standard_symmetric_stable(src.alpha, shape, rng) * dt ** (1.0 / src.alpha)
    return -dz if src.mirror else dz


# ---------------------------------------------------------------------------
# ensembles and stepping
# ---------------------------------------------------------------------------


@dataclass
class TrajectoryEnsemble:
    positions: np.ndarray  # (M+1, K, d)
    grid: TimeGrid
    seed: int = 0
    epoch: int = 0
    stats: dict = field(default_factory=dict)

    @property
    def K(self):
        return self.positions.shape[1]

    @property
    def dim(self):
        return self.positions.shape[2]

    def at(self, m):
        return self.positions[m]

    def to_csv(self, path, epoch=None):
        write_trajectory_csv(path, self, epoch=self.epoch if epoch is None else epoch)


def euler_step(x, dt, b_vals, sigma_vals, dz):
    """One explicit Euler-Maruyama step ``x + b dt + sigma dZ``.

    ``sigma_vals`` may be a scalar, a per-particle scalar (K,), a diagonal
    (K, d) or a full (K, d, q) matrix paired with a (K, q) increment.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DimensionError(f"positions must be (K, d), got shape {x.shape}")
    out = x.copy()
    if b_vals is not None:
        b = np.asarray(b_vals, dtype=float)
        if b.ndim and b.shape not in (x.shape, (x.shape[0], 1), (x.shape[0],)):
            raise DimensionError(f"drift shape {b.shape} does not match positions {x.shape}")
        out += (b[:, None] if b.ndim == 1 else b) * dt
    if sigma_vals is None or dz is None:
        return out
    s = np.asarray(sigma_vals, dtype=float)
    dz = np.asarray(dz, dtype=float)
    if s.ndim == 3:
        if s.shape[:2] != x.shape or dz.shape != (x.shape[0], s.shape[2]):
            raise DimensionError(f"diffusion {s.shape} / increment {dz.shape} mismatch for {x.shape}")
        out += np.einsum("kdq,kq->kd", s, dz)
        return out
    if dz.shape != x.shape:
        raise DimensionError(f"increment shape {dz.shape} does not match positions {x.shape}")
    if s.ndim == 0:
        out += s * dz
    elif s.ndim == 1:
        if s.shape[0] != x.shape[0]:
            raise DimensionError(f"diffusion length {s.shape[0]} != particle count {x.shape[0]}")
        out += s[:, None] * dz
    elif s.shape == x.shape:
        out += s * dz
    else:
        raise DimensionError(f"diffusion shape {s.shape} does not match positions {x.shape}")
    return out


def integrate(problem, grid, x0, field_at, noise, epoch=0, injected=None, keep_nodes=None):
    """Run the Euler scheme from ``x0`` and return the (M+1, K, d) path array.

    ``field_at(m, x)`` supplies the frozen measure handle used by the drift and
    diffusion closures at node ``m`` (the model for deepSPoC, the particle
    cloud itself for the interacting baseline). ``injected`` optionally maps a
    step index (1-based) to an increment matrix used instead of drawing one.
    With ``keep_nodes`` only those nodes are stored and a ``{m: positions}``
    dict is returned instead of the full array.
    """
    K, d = x0.shape
    if keep_nodes is None:
        paths = np.empty((grid.M + 1, K, d))
    else:
        keep_nodes = set(int(m) for m in keep_nodes)
        paths = {}
    if keep_nodes is None or 0 in keep_nodes:
        paths[0] = x0.copy()
    x = x0
    dt = grid.dt
    for m in range(1, grid.M + 1):
        t = grid.time(m - 1)
        fld = field_at(m - 1, x)
        b = problem.drift(t, x, fld) if problem.drift is not None else None
        if injected is not None and m in injected:
            dz = np.asarray(injected[m], dtype=float).reshape(K, -1)
        elif noise.kind == "none" or problem.diffusion is None:
            dz = None
        else:
            dz = sample_increment(noise, dt, K, epoch=epoch, node=m)
        s = problem.diffusion(t, x, fld) if (problem.diffusion is not None and dz is not None) else None
        x = euler_step(x, dt, b, s, dz)
        bad = ~np.isfinite(x).all(axis=1)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise BlowUpError(f"non-finite position for particle {i} at node {m}", particle=i, node=m)
        if keep_nodes is None or m in keep_nodes:
            paths[m] = x
    return paths


def simulate_batch(problem, model, grid, K, seed, epoch=0, mirror=False, injected=None, x0=None):
    """Simulate K particles through the frozen ``model`` on ``grid``.

    The model is only read: its normalizers and envelopes are frozen for the
    whole batch and no gradient information flows through the simulation.
    """
    if K < 1:
        raise EmptyBatchError("simulate_batch needs K >= 1")
    if x0 is None:
        x0 = problem.sample_initial(K, keyed_rng(seed, epoch, 0, TAG_INIT))
        if mirror:
            x0 = -x0
    x0 = np.asarray(x0, dtype=float).reshape(K, problem.dim)
    frozen = model.freeze(grid, seed=seed, epoch=epoch, mirror=mirror) if model is not None else None

    def field_at(m, _x):
        return frozen.field(m) if frozen is not None else None

    noise = problem.noise_source(seed=seed, mirror=mirror)
    paths = integrate(problem, grid, x0, field_at, noise, epoch=epoch, injected=injected)
    stats = frozen.stats() if frozen is not None else {}
    return TrajectoryEnsemble(paths, grid, seed=seed, epoch=epoch, stats=stats)


def write_trajectory_csv(path, ensemble, epoch=0):
    """Dump an ensemble as ``epoch,m,t,i,x0..x{d-1}`` rows."""
    d = ensemble.dim
    times = ensemble.grid.times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "m", "t", "i"] + [f"x{k}" for k in range(d)])
        for m in range(ensemble.positions.shape[0]):
            for i in range(ensemble.K):
                w.writerow([epoch, m, repr(float(times[m])), i] + [repr(float(v)) for v in ensemble.positions[m, i]])
