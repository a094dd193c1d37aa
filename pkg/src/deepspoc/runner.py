"""Experiment orchestration: run a configuration and persist its artifacts.

An artifact directory holds ``config.json``, ``manifest.json``,
``epoch_log.csv``, ``metrics.csv``, ``density_slices.csv`` and
``checkpoints/``. A run that aborts keeps what it wrote and adds an
``INCOMPLETE`` marker.
"""

import hashlib
import json
import logging
import os
import shutil
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import set_num_threads
from .baselines import baseline_poc
from .config import build_grid, build_mollifier, build_problem, build_trainer, dump_config, validate
from .diagnostics import l1_distance, relative_l2, second_moment_slope, write_density_slice, write_metrics_csv
from .errors import ConfigurationError, DeepSPoCError, InvalidParameterError
from .models import load_checkpoint, save_checkpoint
from .mollify import EmpiricalMeasure, kde_eval
from .problems import cw_invariant_density

log = logging.getLogger("deepspoc")

KNOWN_METRICS = ("relative_l2", "second_moment_slope", "l1_invariant", "mass")
MANIFEST_VERSION = 1
INCOMPLETE = "INCOMPLETE"


def content_hash(text):
    """Git blob id of ``text``."""
    data = text.encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_from_file(path):
    """Load a config file or the config echoed inside a run manifest."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    if isinstance(data, dict) and "manifest_version" in data:
        data = data["config"]
    return validate(data)


def apply_overrides(cfg, seed=None, epochs=None, particles=None, workers=None, out=None):
    data = cfg.model_dump(mode="json")
    if seed is not None:
        data["training"]["seed"] = int(seed)
    if epochs is not None:
        data["training"]["epochs"] = int(epochs)
    if particles is not None:
        data["training"]["K"] = int(particles)
    if workers is not None:
        data["workers"] = int(workers)
    if out is not None:
        data["output_dir"] = str(out)
    return validate(data)


def default_output_dir(cfg, suffix=""):
    root = Path(os.environ.get("DEEPSPOC_OUT", "runs"))
    name = cfg.preset or cfg.problem.kind
    return root / f"{name}_seed{cfg.training.seed}{suffix}"


def _prepare_dir(path):
    path = Path(path)
    if path.exists():
        for name in ("epoch_log.csv", "metrics.csv", "density_slices.csv", "baseline_density.csv", INCOMPLETE):
            if (path / name).exists():
                (path / name).unlink()
        if (path / "checkpoints").exists():
            shutil.rmtree(path / "checkpoints")
    path.mkdir(parents=True, exist_ok=True)
    return path


def slice_points(domain, n):
    """Points along the first axis with the other coordinates at zero."""
    x = np.linspace(domain.lo[0], domain.hi[0], n)
    pts = np.zeros((n, domain.dim))
    pts[:, 0] = x
    return pts


def evaluate_metrics(cfg, trainer, epoch):
    """Rows ``(epoch, metric, value, stderr)`` for the configured metrics."""
    model, problem, grid = trainer.model, trainer.problem, trainer.grid
    t_end = grid.t0 + grid.T
    rows = []
    seed = cfg.training.seed
    for name in cfg.diagnostics.metrics:
        if name == "relative_l2":
            if problem.reference is None:
                raise ConfigurationError("relative_l2 needs a problem with a reference solution")
            val = relative_l2(lambda x: model.density(t_end, x), lambda x: problem.reference(t_end, x),
                              model.domain, cfg.diagnostics.n_eval, problem.reference_scale, seed)
            rows.append((epoch, name, val, None))
        elif name == "second_moment_slope":
            if trainer.last is None:
                continue
            val = second_moment_slope(list(trainer.last.positions), grid.times)
            rows.append((epoch, name, val, None))
        elif name == "l1_invariant":
            if model.dim != 1:
                raise ConfigurationError("l1_invariant is defined for one-dimensional problems")
            beta = cfg.problem.cw_beta
            val = l1_distance(lambda x: model.density(t_end, x[:, None]), lambda x: cw_invariant_density(x, beta),
                              -3.0, 3.0)
            rows.append((epoch, name, val, None))
        elif name == "mass":
            rows.append((epoch, name, max_mass_error(model, grid), None))
        else:
            raise ConfigurationError(f"unknown metric {name!r}; known: {', '.join(KNOWN_METRICS)}")
    return rows


def max_mass_error(model, grid, n=4096):
    """Largest ``|mass - 1|`` of the rectified density over the grid nodes.

    Mass is integrated on a midpoint grid independent of the model's own
    rectification quadrature.
    """
    if model.dim != 1:
        pts, w = model.quad_nodes()
    else:
        lo, hi = model.domain.lo[0], model.domain.hi[0]
        pts = (lo + (hi - lo) * (np.arange(n) + 0.5) / n)[:, None]
        w = np.full(n, (hi - lo) / n)
    return max(abs(float(w @ model.density(t, pts)) - 1.0) for t in grid.times)


def write_slices(cfg, trainer, path):
    model, problem, grid = trainer.model, trainer.problem, trainer.grid
    pts = slice_points(model.domain, cfg.diagnostics.slice_points)
    times = cfg.diagnostics.eval_times or [grid.t0, grid.t0 + grid.T]
    scale = problem.reference_scale
    for t in times:
        vals = scale * model.density(t, pts)
        ref = None
        if problem.reference is not None:
            ref = problem.reference(t, pts)
        elif problem.initial_density is not None and np.isclose(t, grid.t0):
            ref = problem.initial_density(pts)
        write_density_slice(path, t, pts, vals, ref)


def _manifest(cfg, out, status, extra=None):
    text = dump_config(cfg)
    files = {}
    for p in sorted(Path(out).rglob("*")):
        if p.is_file() and p.name not in ("manifest.json",):
            files[str(p.relative_to(out))] = _file_sha256(p)
    man = {
        "manifest_version": MANIFEST_VERSION,
        "package_version": __version__,
        "status": status,
        "config": json.loads(text),
        "config_hash": content_hash(text),
        "seeds": {"training": cfg.training.seed},
        "files": files,
    }
    man.update(extra or {})
    with open(Path(out) / "manifest.json", "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)
    return man


def run(cfg, out=None, progress=None):
    """Train per ``cfg`` and write artifacts; returns the artifact directory.

    Raises :class:`DeepSPoCError` subclasses on abort after marking the
    directory ``INCOMPLETE``.
    """
    set_num_threads(cfg.workers)
    grid = build_grid(cfg)
    problem = build_problem(cfg)
    for name in cfg.diagnostics.metrics:
        if name not in KNOWN_METRICS:
            raise ConfigurationError(f"unknown metric {name!r}; known: {', '.join(KNOWN_METRICS)}")
    trainer = build_trainer(cfg, problem=problem, grid=grid)
    out = _prepare_dir(out or cfg.output_dir or default_output_dir(cfg))
    with open(out / "config.json", "w") as fh:
        fh.write(dump_config(cfg))
    ckpt = out / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    metrics_path = out / "metrics.csv"
    write_metrics_csv(metrics_path, [])
    epochs = cfg.training.epochs
    total = epochs * cfg.training.n_ada
    diag = cfg.diagnostics

    def callback(tr, rep):
        n = rep["epoch"]
        if (n + 1) % diag.cadence == 0 or n + 1 == total:
            write_metrics_csv(metrics_path, evaluate_metrics(cfg, tr, n), append=True)
        if diag.checkpoint_every and (n + 1) % diag.checkpoint_every == 0:
            save_checkpoint(ckpt / f"epoch_{n + 1:06d}.npz", tr.model, epoch=n + 1)
        if progress is not None:
            progress(rep)

    try:
        trainer.train(epochs, callback=callback, log_path=out / "epoch_log.csv")
        save_checkpoint(ckpt / "final.npz", trainer.model, epoch=total, extra={"config_hash": content_hash(dump_config(cfg))})
        write_slices(cfg, trainer, out / "density_slices.csv")
    except DeepSPoCError as exc:
        (out / INCOMPLETE).write_text(f"{type(exc).__name__}: {exc}\n")
        _manifest(cfg, out, "incomplete", {"error": f"{type(exc).__name__}: {exc}",
                                           "epochs_completed": len(trainer.history)})
        raise
    _manifest(cfg, out, "complete", {"epochs_completed": len(trainer.history)})
    return out


def run_baseline(cfg, kind="poc", out=None):
    """Reference particle solution; writes ``baseline_density.csv`` at the terminal node."""
    if kind != "poc":
        raise InvalidParameterError(f"unknown baseline {kind!r}; only 'poc' is available from the command line")
    set_num_threads(cfg.workers)
    grid = build_grid(cfg)
    problem = build_problem(cfg)
    moll = build_mollifier(cfg)
    out = _prepare_dir(out or cfg.output_dir or default_output_dir(cfg, "_baseline"))
    with open(out / "config.json", "w") as fh:
        fh.write(dump_config(cfg))
    nodes = sorted({0, grid.M // 2, grid.M})
    try:
        res = baseline_poc(problem, cfg.training.K, grid, moll, seed=cfg.training.seed, keep_nodes=nodes)
    except DeepSPoCError as exc:
        (out / INCOMPLETE).write_text(f"{type(exc).__name__}: {exc}\n")
        _manifest(cfg, out, "incomplete", {"baseline": kind, "error": str(exc)})
        raise
    from .models import Domain

    dom = Domain.box(cfg.model.half_width, problem.dim)
    pts = slice_points(dom, cfg.diagnostics.slice_points)
    path = out / "baseline_density.csv"
    for m in nodes:
        vals = kde_eval(EmpiricalMeasure(res.snapshots[m]), moll, pts)
        write_density_slice(path, grid.time(m), pts, problem.reference_scale * vals)
    _manifest(cfg, out, "complete", {"baseline": kind, "particles": cfg.training.K})
    return out


def diagnose(artifact_dir):
    """Recompute the configured metrics from the final checkpoint."""
    out = Path(artifact_dir)
    cfg = config_from_file(out / "config.json")
    ck = out / "checkpoints" / "final.npz"
    if not ck.exists():
        raise ConfigurationError(f"{ck} not found; was the run completed?")
    model, header = load_checkpoint(ck)
    grid = build_grid(cfg)
    problem = build_problem(cfg)

    class _View:
        pass

    view = _View()
    view.model, view.problem, view.grid, view.last = model, problem, grid, None
    metrics = [m for m in cfg.diagnostics.metrics if m != "second_moment_slope"]
    cfg2 = cfg.model_copy(update={"diagnostics": cfg.diagnostics.model_copy(update={"metrics": metrics})})
    epoch = header.get("epoch")
    rows = evaluate_metrics(cfg2, view, epoch - 1 if epoch else epoch)
    write_metrics_csv(out / "diagnose.csv", rows)
    return rows
