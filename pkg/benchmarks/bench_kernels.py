"""Timing comparison of the numba kernels against their numpy fallbacks.

Runs the implicit Euler sweep and the convolution sum through both the
active backend (fracspde.kernels.euler_endpoint etc., numba-jitted
unless FRACSPDE_DISABLE_NUMBA is set) and the pure-python/numpy
implementations (kernels.py_*), on the problem sizes the convergence
studies actually use.

Usage: python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import math
import time

import numpy as np

from fracspde import kernels
from fracspde.spectral import sine_matrix


def _time(fn, *args, repeat):
    fn(*args)  # warm-up / JIT
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_euler(n_modes, m_steps, f_kind, repeat):
    rng = np.random.default_rng(0)
    lam = (np.pi * np.arange(1, n_modes + 1)) ** 2
    tau = 1.0 / m_steps
    step_factor = 1.0 / (1.0 + tau * lam)
    dw = rng.standard_normal((m_steps, n_modes)) * tau**0.75
    x0 = rng.standard_normal(n_modes)
    if f_kind == kernels.F_SIN:
        mat = np.ascontiguousarray(sine_matrix(n_modes))
        scale = math.sqrt(n_modes + 1)
    else:
        mat = kernels.empty_dst_matrix()
        scale = 1.0
    args = (x0, step_factor, tau, dw, f_kind, 1.0, mat, scale)
    fast = _time(kernels.euler_endpoint, *args, repeat=repeat)
    slow = _time(kernels.py_euler_endpoint, *args, repeat=repeat)
    return fast, slow


def bench_convolution(n_modes, m_steps, repeat):
    rng = np.random.default_rng(1)
    lam = (np.pi * np.arange(1, n_modes + 1)) ** 2
    tau = 1.0 / m_steps
    dw = rng.standard_normal((m_steps, n_modes)) * tau**0.75
    args = (lam, dw, tau, m_steps)
    fast = _time(kernels.convolution_endpoint, *args, repeat=repeat)
    slow = _time(kernels.py_convolution_endpoint, *args, repeat=repeat)
    return fast, slow


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<42}{'active':>12}{'numpy':>12}{'speedup':>9}")
    cases = [
        ("euler F=0, N=64, M=4096", bench_euler,
         (64, 4096, kernels.F_ZERO)),
        ("euler F=sin, N=64, M=4096", bench_euler,
         (64, 4096, kernels.F_SIN)),
        ("euler F=sin, N=512, M=200", bench_euler,
         (512, 200, kernels.F_SIN)),
        ("euler F=sin, N=32, M=16384", bench_euler,
         (32, 16384, kernels.F_SIN)),
        ("convolution, N=16, M=65536", bench_convolution, (16, 65536)),
    ]
    for label, fn, params in cases:
        fast, slow = fn(*params, repeat=args.repeat)
        print(f"{label:<42}{fast * 1e3:>10.2f}ms{slow * 1e3:>10.2f}ms"
              f"{slow / fast:>8.1f}x")


if __name__ == "__main__":
    main()
