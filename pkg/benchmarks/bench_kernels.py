"""Time the wFM kernels on both backends.

    python3 benchmarks/bench_kernels.py [--n 100] [--repeat 5]

Both backend modules are imported directly, so one process compares them
regardless of SURREAL_BACKEND.  Outputs are checked for agreement first.
"""

import argparse
import time

import numpy as np

from surreal.kernels import _numba, _numpy
from surreal.layers import window_index
from surreal.wfm import step_fractions


def case(n, channels, size, out, kernel, stride, seed=0):
    rng = np.random.default_rng(seed)
    in_shape = (channels, size, size)
    idx = window_index(in_shape, (kernel, kernel), (stride, stride))
    lr = rng.normal(size=(n, np.prod(in_shape)))
    th = rng.uniform(-np.pi, np.pi, size=lr.shape)
    t = step_fractions(rng.normal(size=(out, idx.shape[1])))
    g = rng.normal(size=(2, n, out, idx.shape[0]))
    return lr, th, idx, t, g


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    cases = {
        "conv 1x32x32 -> 8, k2 s2": (1, 32, 8, 2, 2),
        "conv 8x16x16 -> 16, k2 s2": (8, 16, 16, 2, 2),
        "conv 1x100x100 -> 8, k5 s5": (1, 100, 8, 5, 5),
    }
    print(f"{'case':30s} {'pass':>8s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name, shape in cases.items():
        lr, th, idx, t, g = case(args.n, *shape)
        ref = _numpy.wfm_forward(lr, th, idx, t)
        got = _numba.wfm_forward(lr, th, idx, t)  # also triggers compilation
        assert all(np.allclose(a, b, atol=1e-12) for a, b in zip(ref, got))
        _numba.wfm_backward(lr, th, idx, t, g[0], g[1])
        for label, np_fn, nb_fn in (
            ("fwd", lambda: _numpy.wfm_forward(lr, th, idx, t), lambda: _numba.wfm_forward(lr, th, idx, t)),
            (
                "bwd",
                lambda: _numpy.wfm_backward(lr, th, idx, t, g[0], g[1]),
                lambda: _numba.wfm_backward(lr, th, idx, t, g[0], g[1]),
            ),
        ):
            a, b = best_of(np_fn, args.repeat), best_of(nb_fn, args.repeat)
            print(f"{name:30s} {label:>8s} {a * 1e3:8.2f}ms {b * 1e3:8.2f}ms {a / b:7.1f}x")


if __name__ == "__main__":
    main()
