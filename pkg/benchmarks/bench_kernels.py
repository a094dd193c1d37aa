"""
Kernel benchmark: numba vs numpy
================================

Times the two hot kernels (mollified kernel sum, Keller-Segel convolution) on
both backends at a few problem sizes and checks that they agree.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from deepspoc._accel import HAVE_NUMBA
from deepspoc.kernels import kde_sum, ks_convolution
from deepspoc.problems import ks_constant


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba not installed; nothing to compare")
        return
    rng = np.random.default_rng(0)

    print(f"{'kernel':<22}{'size':>16}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max diff':>12}")
    print("-" * 84)
    for d, K, Q in [(1, 1000, 1000), (1, 1000, 100_000), (2, 2000, 2000), (3, 4000, 4000)]:
        pts = rng.normal(0.0, 0.5, (K, d))
        q = rng.uniform(-2.0, 2.0, (Q, d))
        w = np.full(K, 1.0 / K)
        kde_sum(pts[:10], w[:10], q[:10], 0.01, backend="numba")  # compile outside the timing
        t_np, a = best_of(lambda: kde_sum(pts, w, q, 0.02, backend="numpy"), args.repeat)
        t_nb, b = best_of(lambda: kde_sum(pts, w, q, 0.02, backend="numba"), args.repeat)
        diff = float(np.max(np.abs(a - b)))
        print(f"{'kde gaussian d=' + str(d):<22}{f'{K}x{Q}':>16}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{diff:>12.2e}")

    cd = ks_constant(2)
    for n, ng in [(2000, 500), (20_000, 500)]:
        x = rng.normal(0.0, 0.4, (n, 2))
        cloud = rng.normal(0.0, 0.4, (ng, 2))
        ks_convolution(x[:5], cloud[:5], cd, 1e-3, backend="numba")
        t_np, (a, _) = best_of(lambda: ks_convolution(x, cloud, cd, 1e-3, backend="numpy"), args.repeat)
        t_nb, (b, _) = best_of(lambda: ks_convolution(x, cloud, cd, 1e-3, backend="numba"), args.repeat)
        diff = float(np.max(np.abs(a - b)))
        print(f"{'ks convolution d=2':<22}{f'{n}x{ng}':>16}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
