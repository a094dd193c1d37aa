"""Static figures from an artifact directory (matplotlib, Agg backend)."""

import csv
import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .problems import KS_SLOPE  # noqa: E402


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _metric_series(rows, name):
    pts = [(int(r["epoch"]), float(r["value"])) for r in rows if r["metric"] == name]
    return [p[0] for p in pts], [p[1] for p in pts]


def density_cut(slices_path, out_path):
    rows = _read_csv(slices_path)
    if not rows:
        return None
    times = sorted({float(r["t"]) for r in rows})
    t_first, t_last = times[0], times[-1]

    def col(t, key):
        sel = [r for r in rows if float(r["t"]) == t]
        return [float(r["x0"]) for r in sel], [float(r[key]) if r[key] != "" else float("nan") for r in sel]

    fig, ax = plt.subplots(figsize=(6, 4))
    x, y = col(t_first, "density_reference")
    if any(v == v for v in y):
        ax.plot(x, y, color="tab:green", label=f"initial, t={t_first:g}")
    x, y = col(t_last, "density_model")
    ax.plot(x, y, color="tab:orange", label=f"numerical, t={t_last:g}")
    x, y = col(t_last, "density_reference")
    if any(v == v for v in y):
        ax.plot(x, y, color="tab:blue", label=f"exact, t={t_last:g}")
    ax.set_xlim(min(x), max(x))
    ax.set_xlabel("x1 (other coordinates 0)")
    ax.set_ylabel("density")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def metric_curve(rows, name, out_path, ylabel, target=None, log_y=False):
    ep, val = _metric_series(rows, name)
    if not ep:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ep, val, marker="." if len(ep) < 50 else None)
    if target is not None:
        ax.axhline(target, color="k", linestyle="--", label=f"target {target:.5f}")
        ax.legend()
    if log_y and min(val) > 0:
        ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


FIGURES = {
    "error_vs_epoch": ("relative_l2", "relative L2 error", None, True),
    "slope_vs_epoch": ("second_moment_slope", "second-moment slope", KS_SLOPE, False),
    "l1_vs_epoch": ("l1_invariant", "L1 distance to invariant density", None, True),
}


def export_plots(artifact_dir, out_dir=None):
    """Write every figure the artifacts support.

    Returns ``{figure: path}`` for written files and ``{figure: reason}`` for
    skipped ones; each skip is also issued as a warning.
    """
    src = Path(artifact_dir)
    dst = Path(out_dir) if out_dir else src / "plots"
    written, skipped = {}, {}
    metrics_path = src / "metrics.csv"
    rows = _read_csv(metrics_path) if metrics_path.exists() else []
    if not rows:
        reason = "metrics.csv missing" if not metrics_path.exists() else "metrics.csv has no rows"
        for fig in FIGURES:
            skipped[fig] = reason
    else:
        names = {r["metric"] for r in rows}
        for fig, (metric, ylabel, target, log_y) in FIGURES.items():
            if metric not in names:
                skipped[fig] = f"no {metric} rows in metrics.csv"
                continue
            dst.mkdir(parents=True, exist_ok=True)
            written[fig] = metric_curve(rows, metric, dst / f"{fig}.png", ylabel, target, log_y)
    slices = src / "density_slices.csv"
    if not rows:
        skipped["density_cut"] = skipped.get("error_vs_epoch", "metrics.csv missing")
    elif not slices.exists():
        skipped["density_cut"] = "density_slices.csv missing"
    else:
        dst.mkdir(parents=True, exist_ok=True)
        p = density_cut(slices, dst / "density_cut.png")
        if p is None:
            skipped["density_cut"] = "density_slices.csv has no rows"
        else:
            written["density_cut"] = p
    for fig, reason in skipped.items():
        warnings.warn(f"{fig}: {reason}", stacklevel=2)
    return written, skipped
