"""Timing comparison of the numba kernels against the pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [--repeat N]

Workloads mirror the package's heavy paths: one-dimensional mass stepping at
large n, a two-dimensional lattice, and Heisenberg convolution powers.  Both
backends are imported explicitly, so this works regardless of the
GMWALK_PURE_NUMPY setting (the numba side is skipped when unavailable).
"""

import argparse
import time

import numpy as np

from gmwalk import _kernels


def time_fn(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_lattice_1d(steps=2000, half=2100):
    L = 2 * half + 1
    trans = np.full((3, 3), 1.0 / 3.0)
    offs = np.array([-1, 0, 1], dtype=np.int64)

    def run(kernel):
        W = np.zeros((3, L))
        W[:, half] = 1.0 / 3.0
        out = np.zeros_like(W)
        for _ in range(steps):
            out.fill(0.0)
            kernel(W, out, trans, offs)
            W, out = out, W
        return W

    return "lattice 1d (3 states, n=2000)", run


def bench_lattice_2d(steps=200, half=210):
    N = 2 * half + 1
    trans = np.full((3, 3), 1.0 / 3.0)
    # flat offsets for increments (1,0), (0,1), (0,0) on an N x N box
    offs = np.array([N, 1, 0], dtype=np.int64)

    def run(kernel):
        W = np.zeros((3, N * N))
        W[:, half * N + half] = 1.0 / 3.0
        out = np.zeros_like(W)
        for _ in range(steps):
            out.fill(0.0)
            kernel(W, out, trans, offs)
            W, out = out, W
        return W

    return "lattice 2d (3 states, n=200)", run


def bench_heis_conv(steps=40):
    k = steps + 2
    zb = k * k // 4 + k
    dims = (2 * k + 1, 2 * k + 1, 2 * zb + 1)
    weights = np.array([0.4, 0.1, 0.3, 0.2])
    incs = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]], dtype=np.int64)
    oy = k

    def run(kernel):
        w = np.zeros(dims)
        w[k, k, zb] = 1.0
        out = np.zeros_like(w)
        for _ in range(steps):
            out.fill(0.0)
            kernel(w, out, weights, incs, oy)
            w, out = out, w
        return w

    return f"heisenberg convolution (k={steps})", run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    pairs = [
        (bench_lattice_1d(), _kernels.lattice_step_numpy, _kernels.lattice_step_numba),
        (bench_lattice_2d(), _kernels.lattice_step_numpy, _kernels.lattice_step_numba),
        (bench_heis_conv(), _kernels.heis_conv_step_numpy, _kernels.heis_conv_step_numba),
    ]
    print(f"numba available: {_kernels.HAS_NUMBA}   active backend: {_kernels.BACKEND}")
    print(f"{'workload':42s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for (name, run), np_kernel, nb_kernel in pairs:
        t_np = time_fn(run, np_kernel, repeat=args.repeat)
        if nb_kernel is None:
            print(f"{name:42s} {t_np:9.3f}s {'n/a':>10s} {'n/a':>8s}")
            continue
        run(nb_kernel)  # compile outside the timed region
        t_nb = time_fn(run, nb_kernel, repeat=args.repeat)
        # both paths must agree bit-for-bit on the same workload
        ref = run(np_kernel)
        got = run(nb_kernel)
        assert np.allclose(ref, got, rtol=0, atol=1e-14), name
        print(f"{name:42s} {t_np:9.3f}s {t_nb:9.3f}s {t_np / t_nb:7.2f}x")


if __name__ == "__main__":
    main()
