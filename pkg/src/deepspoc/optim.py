"""Learning-rate schedule and the Adam optimizer."""

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, NumericError


@dataclass(frozen=True)
class Schedule:
    """Step decay ``alpha0 * gamma**floor(n / step)``; ``harmonic`` gives ``alpha0 / (n + 1)``."""

    alpha0: float = 1e-3
    gamma: float = 0.5
    step: int = 500
    harmonic: bool = False

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise InvalidParameterError(f"initial rate must be positive, got {self.alpha0}")
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidParameterError(f"contraction factor must lie in (0, 1], got {self.gamma}")
        if int(self.step) < 1:
            raise InvalidParameterError(f"decay step must be >= 1, got {self.step}")

    def rate(self, n):
        if n < 0:
            raise InvalidParameterError(f"epoch index must be >= 0, got {n}")
        if self.harmonic:
            return self.alpha0 / (n + 1)
        return self.alpha0 * self.gamma ** (n // self.step)


def schedule_rate(s, n):
    return s.rate(n)


@dataclass
class AdamState:
    size: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)
    step: int = 0

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)

    def reset(self):
        self.m[:] = 0.0
        self.v[:] = 0.0
        self.step = 0

    def copy(self):
        return copy.deepcopy(self)


def adam_step(state, params, grad, lr):
    """One bias-corrected Adam step; returns the new parameter vector."""
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient; epoch aborted")
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grad * grad
    mhat = state.m / (1.0 - state.beta1**state.step)
    vhat = state.v / (1.0 - state.beta2**state.step)
    return params - lr * mhat / (np.sqrt(vhat) + state.eps)


def harmonic_weights(rates):
    """Batch weights ``2 a_l prod_{j>l} (1 - 2 a_j)`` and the residual initial weight."""
    rates = np.asarray(rates, dtype=float)
    n = rates.size
    w = np.empty(n)
    tail = 1.0
    for l in range(n - 1, -1, -1):
        w[l] = 2.0 * rates[l] * tail
        tail *= 1.0 - 2.0 * rates[l]
    return w, tail


