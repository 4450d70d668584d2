"""numba kernels for the incremental weighted Frechet mean.

Same contract as :mod:`surreal.kernels._numpy`.  Samples are distributed
over threads with ``prange``; every thread writes only its own sample's
slice, and the per-sample parameter gradients are reduced afterwards in a
fixed order, so results do not depend on the thread count.
"""

import math
import os

import numba
import numpy as np
from numba import njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the bundled TBB is often too old and warns on first use
    numba.config.THREADING_LAYER = "workqueue"

TWO_PI = 2.0 * math.pi


@njit(cache=True, inline="always")
def _wrap(x):
    if -math.pi < x <= math.pi:
        return x
    return math.pi - ((math.pi - x) % TWO_PI)


@njit(cache=True, parallel=True)
def wfm_forward(lr, th, idx, t):
    N = lr.shape[0]
    P, K = idx.shape
    O = t.shape[0]
    out_r = np.empty((N, O, P))
    out_t = np.empty((N, O, P))
    for n in prange(N):
        for o in range(O):
            for p in range(P):
                j = idx[p, 0]
                m_r = lr[n, j]
                m_t = th[n, j]
                for k in range(1, K):
                    j = idx[p, k]
                    tk = t[o, k]
                    m_r = (1.0 - tk) * m_r + tk * lr[n, j]
                    m_t = _wrap(m_t + tk * _wrap(th[n, j] - m_t))
                out_r[n, o, p] = m_r
                out_t[n, o, p] = m_t
    return out_r, out_t


@njit(cache=True, parallel=True)
def _wfm_backward(lr, th, idx, t, g_r, g_t):
    N = lr.shape[0]
    P, K = idx.shape
    O = t.shape[0]
    gx_r = np.zeros_like(lr)
    gx_t = np.zeros_like(th)
    grad_t = np.zeros((N, O, K))
    for n in prange(N):
        prev_r = np.empty(K)
        delta = np.empty(K)
        for o in range(O):
            for p in range(P):
                j = idx[p, 0]
                m_r = lr[n, j]
                m_t = th[n, j]
                for k in range(1, K):
                    j = idx[p, k]
                    tk = t[o, k]
                    prev_r[k] = m_r
                    d = _wrap(th[n, j] - m_t)
                    delta[k] = d
                    m_r = (1.0 - tk) * m_r + tk * lr[n, j]
                    m_t = _wrap(m_t + tk * d)
                a_r = g_r[n, o, p]
                a_t = g_t[n, o, p]
                for k in range(K - 1, 0, -1):
                    j = idx[p, k]
                    tk = t[o, k]
                    grad_t[n, o, k] += a_r * (lr[n, j] - prev_r[k]) + a_t * delta[k]
                    gx_r[n, j] += a_r * tk
                    gx_t[n, j] += a_t * tk
                    a_r *= 1.0 - tk
                    a_t *= 1.0 - tk
                j = idx[p, 0]
                gx_r[n, j] += a_r
                gx_t[n, j] += a_t
    return gx_r, gx_t, grad_t


def wfm_backward(lr, th, idx, t, g_r, g_t):
    gx_r, gx_t, grad_t = _wfm_backward(lr, th, idx, t, g_r, g_t)
    return gx_r, gx_t, grad_t.sum(axis=0)
