import os
import subprocess
import sys

import numpy as np
import pytest

from surreal import kernels
from surreal.kernels import _numba, _numpy
from surreal.layers import window_index
from surreal.wfm import step_fractions


def make_case(rng, n=3, in_shape=(2, 5, 4), kernel=(2, 2), stride=(1, 2), out=3):
    idx = window_index(in_shape, kernel, stride)
    lr = rng.normal(size=(n, int(np.prod(in_shape))))
    th = rng.uniform(-np.pi, np.pi, size=lr.shape)
    t = step_fractions(rng.normal(size=(out, idx.shape[1])))
    g_r, g_t = rng.normal(size=(2, n, out, idx.shape[0]))
    return lr, th, idx, t, g_r, g_t


def test_backends_agree(rng):
    for _ in range(5):
        lr, th, idx, t, g_r, g_t = make_case(rng)
        for a, b in zip(_numpy.wfm_forward(lr, th, idx, t), _numba.wfm_forward(lr, th, idx, t)):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)
        ref = _numpy.wfm_backward(lr, th, idx, t, g_r, g_t)
        got = _numba.wfm_backward(lr, th, idx, t, g_r, g_t)
        for a, b in zip(ref, got):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("impl", [_numpy, _numba], ids=["numpy", "numba"])
def test_backward_matches_finite_differences(rng, impl):
    lr, th, idx, t, g_r, g_t = make_case(rng, n=2, in_shape=(1, 4), kernel=(3,), stride=(1,), out=2)

    def loss(lr, th, t):
        y_r, y_t = impl.wfm_forward(lr, th, idx, t)
        return float((y_r * g_r).sum() + (y_t * g_t).sum())

    gx_r, gx_t, grad_t = impl.wfm_backward(lr, th, idx, t, g_r, g_t)
    h = 1e-6
    for arr, grad, name in ((lr, gx_r, "lr"), (th, gx_t, "th"), (t, grad_t, "t")):
        for j in np.ndindex(arr.shape):
            if name == "t" and j[1] == 0:
                continue  # t_0 only selects the first point; it is always 1
            args = {"lr": lr.copy(), "th": th.copy(), "t": t.copy()}
            args[name][j] += h
            up = loss(**args)
            args[name][j] -= 2 * h
            down = loss(**args)
            assert grad[j] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-7)


def test_kernels_are_deterministic(rng):
    lr, th, idx, t, g_r, g_t = make_case(rng, n=16)
    a = kernels.wfm_backward(lr, th, idx, t, g_r, g_t)
    b = kernels.wfm_backward(lr, th, idx, t, g_r, g_t)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_dispatch_accepts_non_contiguous_input(rng):
    lr, th, idx, t, *_ = make_case(rng)
    ref = kernels.wfm_forward(lr, th, idx, t)
    got = kernels.wfm_forward(np.asfortranarray(lr), np.asfortranarray(th), idx.astype(np.int32), t)
    for a, b in zip(ref, got):
        np.testing.assert_array_equal(a, b)


def _backend_in_subprocess(value):
    env = dict(os.environ, SURREAL_BACKEND=value)
    return subprocess.run(
        [sys.executable, "-c", "import surreal.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True,
    )


def test_env_flag_selects_backend():
    assert _backend_in_subprocess("numpy").stdout.strip() == "numpy"
    assert _backend_in_subprocess("numba").stdout.strip() == "numba"
    bad = _backend_in_subprocess("cuda")
    assert bad.returncode != 0 and "SURREAL_BACKEND" in bad.stderr


def test_set_threads_is_clamped():
    kernels.set_threads(10_000)
    kernels.set_threads(0)
    if kernels.BACKEND == "numba":
        import numba

        assert numba.get_num_threads() == 1
        kernels.set_threads(numba.config.NUMBA_NUM_THREADS)
