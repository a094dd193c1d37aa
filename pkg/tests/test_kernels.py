import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepspoc import kernels
from deepspoc._accel import HAVE_NUMBA
from deepspoc.mollify import Mollifier
from deepspoc.problems import ks_constant

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


@needs_numba
@pytest.mark.parametrize("kind", ["gaussian", "triangular"])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_kde_backends_agree(kind, d, rng):
    pts = rng.normal(0, 0.4, (300, d))
    w = rng.uniform(0.5, 1.5, 300)
    w /= w.sum()
    q = rng.uniform(-1.5, 1.5, (200, d))
    eps = 0.1
    cn = Mollifier(kind, eps, d).cnorm
    a = kernels.kde_sum(pts, w, q, eps, kind, cn, backend="numpy")
    b = kernels.kde_sum(pts, w, q, eps, kind, cn, backend="numba")
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@needs_numba
@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 3), st.floats(1e-4, 1e-1))
def test_ks_convolution_backends_agree(seed, d, delta):
    r = np.random.default_rng(seed)
    x = r.normal(0, 0.3, (50, d))
    cloud = np.concatenate([r.normal(0, 0.3, (40, d)), x[:3] + 1e-6])
    a, ca = kernels.ks_convolution(x, cloud, ks_constant(d), delta, backend="numpy")
    b, cb = kernels.ks_convolution(x, cloud, ks_constant(d), delta, backend="numba")
    assert ca == cb
    np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-12)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.kde_sum(np.zeros((1, 1)), np.ones(1), np.zeros((1, 1)), 0.1, backend="cuda")


def test_disable_flag_selects_numpy():
    code = "from deepspoc import _accel; print(_accel.USE_NUMBA)"
    env = dict(os.environ, DEEPSPOC_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
