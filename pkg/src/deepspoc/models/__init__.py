from .base import (
    Domain,
    DensityModel,
    EmpiricalField,
    FrozenModel,
    ModelField,
    accept_reject,
    quadrature_nodes,
    rectify,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .flow import CouplingFlowDensity
from .fourier import FourierDensity, basis_eval, fourier_project, fourier_update
from .mlp import MlpDensity

__all__ = [
    "Domain",
    "DensityModel",
    "EmpiricalField",
    "FrozenModel",
    "ModelField",
    "accept_reject",
    "quadrature_nodes",
    "rectify",
    "load_checkpoint",
    "save_checkpoint",
    "CouplingFlowDensity",
    "FourierDensity",
    "basis_eval",
    "fourier_project",
    "fourier_update",
    "MlpDensity",
]
