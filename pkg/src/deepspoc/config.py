"""Run configuration: schema, presets and object construction."""

import copy
import json
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigurationError
from .mollify import Mollifier
from .optim import Schedule
from .sde import TimeGrid
from .train import Trainer, TrainingSetPolicy


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProblemBlock(_Block):
    kind: Literal["pme", "pme_ode", "ks", "cw", "fpme", "linear"]
    dim: int = Field(1, ge=1)
    init: Literal["gauss", "mix"] = "gauss"
    n_conv: int = Field(500, ge=1)
    delta: float = Field(1e-3, gt=0)
    per_particle: bool = False
    cw_beta: float = 1.0
    coupling: float = -0.1
    mean_samples: int = Field(100, ge=1)
    fpme_alpha: float = Field(1.0, gt=0, lt=2)
    fpme_m: float = Field(2.0, gt=1)


class ModelBlock(_Block):
    kind: Literal["mlp", "flow", "fourier"] = "mlp"
    half_width: float = Field(2.0, gt=0)
    hidden: List[int] = [512, 512, 512, 512, 512, 512]
    activation: Literal["relu", "softplus", "tanh"] = "relu"
    beta: float = Field(20.0, gt=0)
    n_blocks: int = Field(6, ge=1)
    x_scale: float = Field(1.0, gt=0)
    n_modes: int = Field(64, ge=1)
    quad_points: Optional[int] = None
    scan_points: int = Field(512, ge=2)
    mc_points: int = Field(100_000, ge=1)


class PolicyBlock(_Block):
    mode: Literal["uniform", "adaptive_union", "model_importance", "kde_importance", "particle_paths"] = "uniform"
    n_uniform: int = Field(1000, ge=0)
    n_adaptive: int = Field(0, ge=0)
    noise: float = Field(0.0, ge=0)
    node_subsample: int = Field(0, ge=0)


class ScheduleBlock(_Block):
    alpha0: float = Field(1e-3, gt=0)
    gamma: float = 0.5
    step: int = Field(500, ge=1)
    harmonic: bool = False

    @field_validator("gamma")
    @classmethod
    def _gamma(cls, v):
        if not 0.0 < v <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        return v


class MollifierBlock(_Block):
    kind: Literal["gaussian", "triangular"] = "gaussian"
    eps: float = Field(0.01, gt=0)


class TrainingBlock(_Block):
    K: int = Field(1000, ge=1)
    t0: float = 0.0
    T: float = Field(1.0, gt=0)
    dt: float = Field(0.01, gt=0)
    epochs: int = Field(100, ge=0)
    loss: Literal["sq", "kl", "path"] = "sq"
    policy: PolicyBlock = PolicyBlock()
    schedule: ScheduleBlock = ScheduleBlock()
    mollifier: MollifierBlock = MollifierBlock()
    seed: int = 0
    n_ada: int = Field(1, ge=1)
    reset_adam: bool = True
    log_floor: float = Field(1e-12, gt=0)


class DiagnosticsBlock(_Block):
    metrics: List[str] = []
    cadence: int = Field(100, ge=1)
    n_eval: int = Field(100_000, ge=1)
    eval_times: Optional[List[float]] = None
    slice_points: int = Field(201, ge=2)
    checkpoint_every: int = Field(0, ge=0)


class RunConfig(_Block):
    preset: Optional[str] = None
    problem: ProblemBlock
    model: ModelBlock = ModelBlock()
    training: TrainingBlock = TrainingBlock()
    diagnostics: DiagnosticsBlock = DiagnosticsBlock()
    output_dir: Optional[str] = None
    workers: int = Field(1, ge=1)


# ---------------------------------------------------------------------------
# presets; widths are desk-scale, see README
# ---------------------------------------------------------------------------

_PME_DIAG = {"metrics": ["relative_l2"], "cadence": 100}

PRESETS = {
    "pme1d": {
        "problem": {"kind": "pme", "dim": 1},
        "model": {"kind": "mlp", "half_width": 2.0, "hidden": [32, 32, 32], "activation": "relu"},
        "training": {"K": 1000, "t0": 1.0, "T": 1.0, "dt": 0.01, "epochs": 7000, "loss": "sq",
                     "policy": {"mode": "uniform", "n_uniform": 1000},
                     "schedule": {"alpha0": 1e-3, "gamma": 0.5, "step": 500},
                     "mollifier": {"kind": "gaussian", "eps": 0.01}},
        "diagnostics": _PME_DIAG,
    },
    "pme3d": {
        "problem": {"kind": "pme", "dim": 3},
        "model": {"kind": "mlp", "half_width": 2.0, "hidden": [64, 64, 64], "activation": "relu", "scan_points": 32},
        "training": {"K": 4000, "t0": 0.1, "T": 0.2, "dt": 0.005, "epochs": 8000, "loss": "sq",
                     "policy": {"mode": "adaptive_union", "n_uniform": 2000, "n_adaptive": 2000, "noise": 0.2},
                     "schedule": {"alpha0": 1e-3, "gamma": 0.5, "step": 500},
                     "mollifier": {"kind": "gaussian", "eps": 0.02}},
        "diagnostics": _PME_DIAG,
    },
    "pme5d": {
        "problem": {"kind": "pme", "dim": 5},
        "model": {"kind": "mlp", "half_width": 3.0, "hidden": [64, 64, 64], "activation": "relu",
                  "mc_points": 20000},
        "training": {"K": 8000, "t0": 1.0, "T": 1.0, "dt": 0.02, "epochs": 12000, "loss": "sq",
                     "policy": {"mode": "adaptive_union", "n_uniform": 2000, "n_adaptive": 4000, "noise": 0.3},
                     "schedule": {"alpha0": 1e-3, "gamma": 0.7, "step": 500},
                     "mollifier": {"kind": "gaussian", "eps": 0.05}},
        "diagnostics": _PME_DIAG,
    },
    "pme6d": {
        "problem": {"kind": "pme", "dim": 6},
        "model": {"kind": "flow", "half_width": 3.0, "hidden": [64, 64], "activation": "tanh", "n_blocks": 6},
        "training": {"K": 10000, "t0": 1.0, "T": 1.5, "dt": 0.025, "epochs": 5000, "loss": "path",
                     "policy": {"mode": "particle_paths"},
                     "schedule": {"alpha0": 1e-3, "gamma": 0.5, "step": 500}},
        "diagnostics": _PME_DIAG,
    },
    "pme8d": {
        "problem": {"kind": "pme", "dim": 8},
        "model": {"kind": "flow", "half_width": 3.0, "hidden": [64, 64], "activation": "tanh", "n_blocks": 6},
        "training": {"K": 10000, "t0": 1.0, "T": 1.5, "dt": 0.025, "epochs": 5000, "loss": "path",
                     "policy": {"mode": "particle_paths"},
                     "schedule": {"alpha0": 1e-3, "gamma": 0.5, "step": 500}},
        "diagnostics": _PME_DIAG,
    },
    "ks2d_gauss": {
        "problem": {"kind": "ks", "dim": 2, "init": "gauss", "n_conv": 500},
        "model": {"kind": "mlp", "half_width": 4.0, "hidden": [32, 32, 32], "activation": "relu", "scan_points": 64},
        "training": {"K": 2000, "t0": 0.0, "T": 0.2, "dt": 0.01, "epochs": 8000, "loss": "sq",
                     "policy": {"mode": "uniform", "n_uniform": 2000},
                     "schedule": {"alpha0": 1e-3, "gamma": 0.7, "step": 500},
                     "mollifier": {"kind": "gaussian", "eps": 0.02}},
        "diagnostics": {"metrics": ["second_moment_slope"], "cadence": 10},
    },
    "cw1d": {
        "problem": {"kind": "cw", "dim": 1, "mean_samples": 100},
        "model": {"kind": "mlp", "half_width": 3.0, "hidden": [32, 32, 32], "activation": "relu", "scan_points": 128},
        "training": {"K": 1000, "t0": 0.0, "T": 10.0, "dt": 0.01, "epochs": 5000, "loss": "sq",
                     "policy": {"mode": "uniform", "n_uniform": 1000},
                     "schedule": {"alpha0": 1e-3, "gamma": 0.5, "step": 500},
                     "mollifier": {"kind": "gaussian", "eps": 0.01}},
        "diagnostics": {"metrics": ["l1_invariant"], "cadence": 100},
    },
    "fpme1d": {
        "problem": {"kind": "fpme", "dim": 1, "fpme_alpha": 1.0, "fpme_m": 2.0},
        "model": {"kind": "mlp", "half_width": 3.0, "hidden": [32, 32, 32], "activation": "relu"},
        "training": {"K": 2000, "t0": 0.0, "T": 0.5, "dt": 0.01, "epochs": 5000, "loss": "sq",
                     "policy": {"mode": "uniform", "n_uniform": 2000},
                     "schedule": {"alpha0": 1e-3, "gamma": 0.5, "step": 500},
                     "mollifier": {"kind": "gaussian", "eps": 0.01}},
        "diagnostics": {"metrics": ["mass"], "cadence": 100},
    },
    "linear1d": {
        "problem": {"kind": "linear", "dim": 1, "mean_samples": 1000},
        "model": {"kind": "mlp", "half_width": 5.0, "hidden": [32, 32, 32], "activation": "relu"},
        "training": {"K": 1000, "t0": 0.0, "T": 1.0, "dt": 0.02, "epochs": 500, "loss": "sq",
                     "policy": {"mode": "uniform", "n_uniform": 1000},
                     "mollifier": {"kind": "gaussian", "eps": 0.05}},
        "diagnostics": {"metrics": [], "cadence": 100},
    },
}

for _base, _ode in (("pme1d", "pme1d_ode"), ("pme3d", "pme3d_ode")):
    _p = copy.deepcopy(PRESETS[_base])
    _p["problem"]["kind"] = "pme_ode"
    _p["model"]["activation"] = "softplus"
    _p["model"]["beta"] = 20.0
    PRESETS[_ode] = _p


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


PRESETS["ks2d_mix"] = _merge(PRESETS["ks2d_gauss"], {"problem": {"init": "mix"}})


def preset_dict(name):
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    return _merge(PRESETS[name], {"preset": name})


def validate(data):
    """Validate a config dict; a ``preset`` key supplies defaults that the dict overrides."""
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a JSON object")
    if data.get("preset"):
        data = _merge(preset_dict(data["preset"]), data)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        errs = "; ".join(f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors())
        raise ConfigurationError(f"invalid configuration: {errs}") from exc


def load_config(path):
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    return validate(data)


def load_preset(name):
    return validate(preset_dict(name))


def dump_config(cfg):
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def build_problem(cfg):
    from . import problems

    p = cfg.problem
    t0 = cfg.training.t0
    if p.kind in ("pme", "pme_ode"):
        return problems.pme_problem(p.dim, t0=t0, deterministic=p.kind == "pme_ode")
    if p.kind == "ks":
        if p.dim != 2:
            raise ConfigurationError("the Keller-Segel problem is two-dimensional")
        return problems.ks_problem(p.init, p.n_conv, p.delta, p.per_particle)
    if p.kind == "cw":
        return problems.cw_problem(p.cw_beta, p.coupling, p.mean_samples)
    if p.kind == "fpme":
        return problems.fpme_problem(p.fpme_alpha, p.fpme_m)
    return problems.linear_problem(p.mean_samples)


def build_grid(cfg):
    tr = cfg.training
    return TimeGrid.from_step(tr.t0, tr.T, tr.dt)


def build_mollifier(cfg):
    return Mollifier(cfg.training.mollifier.kind, cfg.training.mollifier.eps, cfg.problem.dim)


def build_model(cfg, grid=None, mirror=False):
    from .models import CouplingFlowDensity, Domain, FourierDensity, MlpDensity

    grid = grid or build_grid(cfg)
    mb = cfg.model
    d = cfg.problem.dim
    dom = Domain.box(mb.half_width, d)
    seed = cfg.training.seed
    if mb.kind == "mlp":
        return MlpDensity(dom, grid.t0, grid.T, hidden=mb.hidden, activation=mb.activation, beta=mb.beta, seed=seed,
                          scan_points=mb.scan_points, mc_points=mb.mc_points, mirror=mirror)
    if mb.kind == "flow":
        return CouplingFlowDensity(dom, grid.t0, grid.T, n_blocks=mb.n_blocks, hidden=mb.hidden,
                                   activation=mb.activation, seed=seed, x_scale=mb.x_scale,
                                   scan_points=mb.scan_points, mc_points=mb.mc_points)
    return FourierDensity(mb.half_width, d, mb.n_modes, grid, quad_points=mb.quad_points, scan_points=mb.scan_points,
                          mollifier=build_mollifier(cfg))


def build_trainer(cfg, model=None, problem=None, grid=None, mirror=False, backend=None):
    grid = grid or build_grid(cfg)
    problem = problem or build_problem(cfg)
    model = model or build_model(cfg, grid, mirror=mirror)
    tr = cfg.training
    pol = tr.policy
    sch = tr.schedule
    return Trainer(problem, model, grid, tr.K, loss=tr.loss,
                   policy=TrainingSetPolicy(pol.mode, pol.n_uniform, pol.n_adaptive, pol.noise, pol.node_subsample),
                   schedule=Schedule(sch.alpha0, sch.gamma, sch.step, sch.harmonic),
                   mollifier=build_mollifier(cfg), seed=tr.seed, n_ada=tr.n_ada, reset_adam=tr.reset_adam,
                   mirror=mirror, log_floor=tr.log_floor, backend=backend)

