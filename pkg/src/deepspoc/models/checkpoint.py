"""Model checkpoints: ``.npz`` with a versioned JSON header and a flat parameter array."""

import json

import numpy as np

from ..errors import ConfigurationError
from ..sde import TimeGrid
from .base import Domain
from .flow import CouplingFlowDensity
from .fourier import FourierDensity
from .mlp import MlpDensity

CHECKPOINT_VERSION = 1


def save_checkpoint(path, model, epoch=None, extra=None):
    header = {
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "dim": model.dim,
        "domain": model.domain.to_dict(),
        "t0": model.t0,
        "T": model.T,
        "config": model.config(),
        "n_params": int(model.n_params),
        "quadrature": {"scan_points": model.scan_points, "mc_points": model.mc_points},
        "epoch": epoch,
        "extra": extra or {},
    }
    if model.kind == "fourier":
        header["grid"] = model.grid.to_dict()
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), params=model.params)


def read_header(path):
    with np.load(path) as z:
        return json.loads(str(z["header"]))


def load_checkpoint(path):
    with np.load(path) as z:
        header = json.loads(str(z["header"]))
        params = np.array(z["params"])
    if header.get("version") != CHECKPOINT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {header.get('version')!r}")
    dom = Domain(tuple(header["domain"]["lo"]), tuple(header["domain"]["hi"]))
    cfg = header["config"]
    quad = header.get("quadrature", {})
    kind = header["kind"]
    if kind == "mlp":
        model = MlpDensity(dom, header["t0"], header["T"], hidden=cfg["hidden"], activation=cfg["activation"],
                           beta=cfg["beta"], **quad)
    elif kind == "flow":
        model = CouplingFlowDensity(dom, header["t0"], header["T"], n_blocks=cfg["n_blocks"], hidden=cfg["hidden"],
                                    activation=cfg["activation"], x_scale=cfg["x_scale"], **quad)
    elif kind == "fourier":
        g = header["grid"]
        model = FourierDensity(cfg["L"], header["dim"], cfg["n_modes"], TimeGrid(g["t0"], g["T"], g["M"]),
                               quad_points=cfg["quad_points"], scan_points=quad.get("scan_points", 512))
    else:
        raise ConfigurationError(f"unknown model kind {kind!r}")
    if params.size != header["n_params"]:
        raise ConfigurationError("checkpoint parameter count does not match its header")
    model.set_params(params)
    return model, header
