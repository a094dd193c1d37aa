"""The deepSPoC epoch loop and its training-set policies."""

import csv
import logging
import time
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, ConfigurationError, DeepSPoCError, InvalidParameterError
from .losses import loss_kl, loss_path, loss_sq
from .mollify import EmpiricalMeasure, Mollifier, kde_eval
from .optim import AdamState, Schedule, adam_step
from .sde import TAG_INIT, TAG_MISC, TAG_TRAIN, keyed_rng, simulate_batch

log = logging.getLogger(__name__)

POLICY_MODES = ("uniform", "adaptive_union", "model_importance", "kde_importance", "particle_paths")
EPOCH_LOG_HEADER = ["epoch", "loss", "lr", "seconds", "clamped_logs", "acceptance_rate"]


@dataclass(frozen=True)
class TrainingSetPolicy:
    mode: str = "uniform"
    n_uniform: int = 1000
    n_adaptive: int = 0
    noise: float = 0.0
    node_subsample: int = 0  # 0 trains on every node

    def __post_init__(self):
        if self.mode not in POLICY_MODES:
            raise ConfigurationError(f"unknown training-set mode {self.mode!r}")
        if self.n_uniform < 0 or self.n_adaptive < 0 or self.noise < 0:
            raise ConfigurationError("training-set sizes and noise must be nonnegative")


def training_nodes(policy, grid, rng):
    if policy.node_subsample and policy.node_subsample < grid.M + 1:
        return np.sort(rng.choice(grid.M + 1, size=policy.node_subsample, replace=False))
    return np.arange(grid.M + 1)


def build_training_sets(policy, domain, grid, epoch, seed, prev=None, current=None, model=None,
                        mollifier=None, nodes=None, mirror=False):
    """Training points per node: returns ``(nodes, sets, eta, info)``.

    ``prev`` is the previous epoch's ensemble (adaptive policy), ``current``
    this epoch's (path and KDE-importance policies). ``eta`` is None for
    uniform sampling, else per-node sampling densities at the points.
    """
    rng = keyed_rng(seed, epoch, 0, TAG_TRAIN)
    if nodes is None:
        nodes = training_nodes(policy, grid, rng)
    info = {"outside": 0}
    mode = policy.mode
    if mode == "adaptive_union" and prev is None:
        mode = "uniform"
    if mode == "uniform":
        n = policy.n_uniform + (policy.n_adaptive if policy.mode == "adaptive_union" else 0)
        pts = domain.uniform(rng, n, mirror=mirror)
        return nodes, [pts] * len(nodes), None, info
    if mode == "adaptive_union":
        K = prev.K
        if policy.n_adaptive > K:
            raise ConfigurationError(f"adaptive set size {policy.n_adaptive} exceeds batch size {K}")
        base = domain.uniform(rng, policy.n_uniform, mirror=mirror)
        sets = []
        for m in nodes:
            sub = keyed_rng(seed, epoch, int(m), TAG_TRAIN)
            idx = sub.choice(K, size=policy.n_adaptive, replace=False)
            delta = sub.standard_normal((policy.n_adaptive, domain.dim))
            if mirror:
                delta = -delta
            extra = prev.positions[m][idx] + policy.noise * delta
            info["outside"] += int((~domain.contains(extra)).sum())
            sets.append(np.concatenate([base, extra]))
        return nodes, sets, None, info
    if mode == "model_importance":
        if model is None or not model.direct_sampling:
            raise CapabilityError("model-importance sampling needs a model with direct sampling")
        sets, eta = [], []
        for m in nodes:
            t = grid.time(m)
            pts = model.sample(t, policy.n_uniform, keyed_rng(seed, epoch, int(m), TAG_TRAIN), mirror=mirror)
            sets.append(pts)
            eta.append(model.density(t, pts))
        return nodes, sets, eta, info
    if mode == "kde_importance":
        if current is None or mollifier is None or mollifier.kind != "gaussian":
            raise CapabilityError("KDE-importance sampling needs the batch and a Gaussian mollifier")
        sets = []
        for m in nodes:
            sub = keyed_rng(seed, epoch, int(m), TAG_TRAIN)
            idx = sub.integers(0, current.K, size=policy.n_uniform)
            delta = sub.standard_normal((policy.n_uniform, domain.dim))
            sets.append(current.positions[m][idx] + mollifier.eps * (-delta if mirror else delta))
        return nodes, sets, "kde", info
    # particle_paths
    if current is None:
        raise ConfigurationError("particle-path training sets need the current ensemble")
    return nodes, [current.positions[m] for m in nodes], None, info


class Trainer:
    """Runs deepSPoC epochs: simulate with the frozen model, fit, one step.

    An epoch that raises leaves the model parameters, the Adam state and the
    stored ensembles exactly as they were before it started.
    """

    def __init__(self, problem, model, grid, K, loss="sq", policy=None, schedule=None, mollifier=None, seed=0,
                 n_ada=1, reset_adam=True, mirror=False, loss_scale=1.0, log_floor=1e-12, backend=None,
                 adam=None, init_fourier=True):
        if loss not in ("sq", "kl", "path"):
            raise ConfigurationError(f"unknown loss {loss!r}")
        self.problem = problem
        self.model = model
        self.grid = grid
        self.K = int(K)
        self.loss = loss
        self.policy = policy or TrainingSetPolicy()
        self.schedule = schedule or Schedule()
        self.mollifier = mollifier or Mollifier("gaussian", 0.01, model.dim)
        self.seed = int(seed)
        self.n_ada = int(n_ada)
        self.reset_adam = bool(reset_adam)
        self.mirror = bool(mirror)
        self.loss_scale = float(loss_scale)
        self.log_floor = float(log_floor)
        self.backend = backend
        self.fourier = model.kind == "fourier"
        if loss == "path" and not model.exact_density:
            raise ConfigurationError("the path loss needs a model with an exact density")
        if self.policy.mode == "model_importance" and not model.direct_sampling:
            raise ConfigurationError("model-importance sampling needs a directly sampleable model")
        if self.fourier and loss != "sq":
            raise ConfigurationError("the Fourier model is updated in closed form and only supports the sq loss")
        self.adam = AdamState(model.n_params, **(adam or {}))
        self.prev = None
        self.last = None
        self.history = []
        if self.fourier and init_fourier:
            if model.mollifier is None:
                model.mollifier = self.mollifier
            x0 = problem.sample_initial(self.K, keyed_rng(self.seed, 0, 0, TAG_INIT, 1))
            model.init_from_points(-x0 if self.mirror else x0)
        self.fourier_batches = []
        self.record_batches = False

    # -- one epoch ----------------------------------------------------------

    def rate(self, n):
        return self.schedule.rate(n)

    def run_epoch(self, n, local=None, policy=None, lr=None):
        """Run epoch ``n`` (``local`` is the index fed to the schedule).

        ``lr`` overrides the schedule; an override of exactly 0 bypasses the
        Fourier rate guard and is meant for tests.
        """
        policy = policy or self.policy
        allow_zero_rate = lr == 0.0
        lr = self.rate(n if local is None else local) if lr is None else float(lr)
        params0 = self.model.params.copy()
        adam0 = self.adam.copy()
        prev0, last0 = self.prev, self.last
        t_start = time.perf_counter()
        try:
            ens = simulate_batch(self.problem, self.model, self.grid, self.K, self.seed, epoch=n, mirror=self.mirror)
            clamped = 0
            if self.fourier:
                proj = self.model.project_ensemble(ens, backend=self.backend)
                if self.record_batches:
                    self.fourier_batches.append(ens.positions.copy())
                # closed-form step; equals a gradient step on the projected L2 residual
                resid = self.model.theta - proj
                value = float(np.sum(resid * resid))
                self.model.update(proj, lr, allow_zero=allow_zero_rate)
            else:
                value, grad, clamped = self._loss_and_grad(ens, n, policy)
                self.model.set_params(adam_step(self.adam, self.model.params, grad, lr))
        except DeepSPoCError:
            self.model.set_params(params0)
            self.adam = adam0
            self.prev, self.last = prev0, last0
            raise
        self.prev = ens
        self.last = ens
        report = {
            "epoch": n,
            "loss": value,
            "lr": lr,
            "seconds": time.perf_counter() - t_start,
            "clamped_logs": clamped,
            "acceptance_rate": ens.stats.get("acceptance_rate", float("nan")),
        }
        self.history.append(report)
        return report

    def _loss_and_grad(self, ens, n, policy):
        if self.loss == "path":
            nodes = training_nodes(policy, self.grid, keyed_rng(self.seed, n, 0, TAG_MISC))
            scale = self.loss_scale * (self.grid.M + 1) / len(nodes)
            value, grad = loss_path(self.model, ens.positions, self.grid, nodes, scale=scale)
            return value, grad, 0
        nodes, sets, eta, _ = build_training_sets(policy, self.model.domain, self.grid, n, self.seed, prev=self.prev,
                                                  current=ens, model=self.model, mollifier=self.mollifier,
                                                  mirror=self.mirror)
        table = [kde_eval(EmpiricalMeasure(ens.positions[m]), self.mollifier, s, backend=self.backend)
                 for m, s in zip(nodes, sets)]
        scale = self.loss_scale * (self.grid.M + 1) / len(nodes)
        if self.loss == "sq":
            value, grad = loss_sq(self.model, self.grid, nodes, sets, table, scale=scale)
            return value, grad, 0
        if isinstance(eta, str):
            eta = table  # sampled from the KDE itself: every weight is 1
        return loss_kl(self.model, self.grid, nodes, sets, table, eta=eta, floor=self.log_floor, scale=scale)

    # -- loops --------------------------------------------------------------

    def train(self, n_epochs, callback=None, log_path=None, start=0):
        """Run ``n_epochs`` epochs per adaptive outer iteration.

        With ``n_ada > 1`` the first outer iteration samples training points
        uniformly and the later ones use the configured policy; the schedule
        restarts each outer iteration and Adam is reset if ``reset_adam``.
        """
        writer = fh = None
        if log_path is not None:
            fh = open(log_path, "a", newline="")
            writer = csv.writer(fh)
            if fh.tell() == 0:
                writer.writerow(EPOCH_LOG_HEADER)
        try:
            n = start
            for k in range(self.n_ada):
                policy = self.policy
                if self.n_ada > 1 and k == 0:
                    policy = TrainingSetPolicy("uniform", self.policy.n_uniform, 0, 0.0, self.policy.node_subsample)
                if k > 0 and self.reset_adam:
                    self.adam.reset()
                for local in range(n_epochs):
                    rep = self.run_epoch(n, local=local if self.n_ada > 1 else n, policy=policy)
                    if writer is not None:
                        writer.writerow([rep[h] for h in EPOCH_LOG_HEADER])
                    if callback is not None:
                        callback(self, rep)
                    n += 1
        finally:
            if fh is not None:
                fh.close()
        return self.history


def check_rate(alpha):
    if not 0.0 < alpha <= 1.0:
        raise InvalidParameterError(f"SPoC rate must lie in (0, 1], got {alpha}")
    return alpha
