"""JIT switch for the hot kernels.

Set ``DEEPSPOC_DISABLE_NUMBA=1`` to force the pure-numpy code path, e.g. on
platforms without numba or when bisecting a numerical discrepancy.
"""

import os

_FLAG = os.getenv("DEEPSPOC_DISABLE_NUMBA", "").strip().lower()
DISABLE_NUMBA = _FLAG not in ("", "0", "false", "no")

try:
    import numba as _nb
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _nb = None

HAVE_NUMBA = _nb is not None
USE_NUMBA = HAVE_NUMBA and not DISABLE_NUMBA

NUMBA_OPTS = {"cache": True, "nogil": True, "fastmath": False}


def njit(func):
    """Compile ``func`` with numba when available, otherwise return it as is."""
    if not HAVE_NUMBA:
        return func
    return _nb.njit(**NUMBA_OPTS)(func)


def set_num_threads(n):
    # a single worker is numba's default; touching the pool would load the threading layer
    if HAVE_NUMBA and n and int(n) > 1:
        _nb.set_num_threads(min(int(n), _nb.config.NUMBA_NUM_THREADS))
