"""Mean-field SDE solvers with a density model in the particle loop."""

from .errors import DeepSPoCError
from .sde import TimeGrid, simulate_batch

__version__ = "0.1.0"

__all__ = ["DeepSPoCError", "TimeGrid", "simulate_batch", "__version__"]
