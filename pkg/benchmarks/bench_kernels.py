"""Compiled vs numpy kernels on the shapes the MNIST CNN actually hits.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from osnn import kernels
from osnn.kernels import _pykernels as py


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cases(rng):
    k = 4
    # (name, n_pad, m_pad, cols, S, complex)
    for name, n, m, cols, S, cplx in [
        ("conv1 fwd, shared real", 12, 16, 64 * 196, 1, False),
        ("conv2 fwd, shared real", 144, 16, 64 * 196, 1, False),
        ("fc fwd, shared real", 400, 12, 64, 1, False),
        ("conv2 fwd, per-sample complex (S=64)", 144, 16, 64 * 196, 64, True),
    ]:
        x = rng.uniform(size=(n, cols))
        B = np.linalg.qr(rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k)))[0]
        P = np.linalg.qr(rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k)))[0]
        sr = rng.uniform(-1, 1, (S, m // k, n // k, k))
        si = rng.uniform(-0.1, 0.1, sr.shape) if cplx else None
        Bi, Pi = (B.imag, P.imag) if cplx else (None, None)
        yield name, (x, B.real, Bi, P.real, Pi, sr, si), m


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'case':42s} {'compiled ms':>12s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, a, m in cases(rng):
        if kernels.BACKEND == "compiled":
            yc = kernels.bsp_forward(*a)
            yp = py.bsp_forward(*a)
            assert np.allclose(yc, yp, atol=1e-10), name
            tc = timeit(lambda: kernels.bsp_forward(*a), args.repeat)
        else:
            tc = float("nan")
        tp = timeit(lambda: py.bsp_forward(*a), args.repeat)
        print(f"{name:42s} {1e3 * tc:12.2f} {1e3 * tp:10.2f} {tp / tc:8.2f}x")
        g = rng.standard_normal((m, a[0].shape[1]))
        if kernels.BACKEND == "compiled":
            tc = timeit(lambda: kernels.bsp_backward(g, *a), args.repeat)
        tp = timeit(lambda: py.bsp_backward(g, *a), args.repeat)
        print(f"{name.replace('fwd', 'bwd'):42s} {1e3 * tc:12.2f} {1e3 * tp:10.2f} {tp / tc:8.2f}x")
    x = rng.uniform(size=(64, 16, 14, 14))
    tc = timeit(lambda: kernels.im2col(x, 3, 3, 1, 1), args.repeat)
    tp = timeit(lambda: py.im2col(x, 3, 3, 1, 1), args.repeat)
    print(f"{'im2col 64x16x14x14, 3x3':42s} {1e3 * tc:12.2f} {1e3 * tp:10.2f} {tp / tc:8.2f}x")


if __name__ == "__main__":
    main()
