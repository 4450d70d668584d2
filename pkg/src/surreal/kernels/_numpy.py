"""Vectorised numpy kernels for the incremental weighted Frechet mean.

Layout shared with the numba backend:

* ``lr``, ``th``: ``(N, F)`` flattened per-sample log-magnitudes and phases
* ``idx``: ``(P, K)`` int64 gather table; row ``p`` lists the flat input
  positions of window ``p`` in canonical (channel, row, col) order
* ``t``: ``(O, K)`` geodesic step fractions ``w_k / sum_{i<=k} w_i``, one row
  per output channel (``t[:, 0]`` is ignored)

Outputs are ``(N, O, P)``.  The loop runs over the K window slots; every
other axis is vectorised.
"""

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def _wrap(x):
    return np.where((x > -math.pi) & (x <= math.pi), x, math.pi - np.mod(math.pi - x, TWO_PI))


def wfm_forward(lr, th, idx, t):
    K = idx.shape[1]
    win_r = lr[:, idx]  # (N, P, K)
    win_t = th[:, idx]
    O = t.shape[0]
    N, P = win_r.shape[0], win_r.shape[1]
    m_r = np.broadcast_to(win_r[:, None, :, 0], (N, O, P)).copy()
    m_t = np.broadcast_to(win_t[:, None, :, 0], (N, O, P)).copy()
    for k in range(1, K):
        tk = t[:, k][None, :, None]
        m_r = (1.0 - tk) * m_r + tk * win_r[:, None, :, k]
        m_t = _wrap(m_t + tk * _wrap(win_t[:, None, :, k] - m_t))
    return m_r, m_t


def wfm_backward(lr, th, idx, t, g_r, g_t):
    K = idx.shape[1]
    win_r = lr[:, idx]
    win_t = th[:, idx]
    O = t.shape[0]
    N, P = win_r.shape[0], win_r.shape[1]

    # replay the forward pass, keeping the state entering each step
    prev_r = np.empty((K, N, O, P))
    delta = np.empty((K, N, O, P))
    m_r = np.broadcast_to(win_r[:, None, :, 0], (N, O, P)).copy()
    m_t = np.broadcast_to(win_t[:, None, :, 0], (N, O, P)).copy()
    for k in range(1, K):
        tk = t[:, k][None, :, None]
        prev_r[k] = m_r
        d = _wrap(win_t[:, None, :, k] - m_t)
        delta[k] = d
        m_r = (1.0 - tk) * m_r + tk * win_r[:, None, :, k]
        m_t = _wrap(m_t + tk * d)

    a_r = np.array(g_r, dtype=np.float64, copy=True)
    a_t = np.array(g_t, dtype=np.float64, copy=True)
    gw_r = np.empty((N, O, P, K))
    gw_t = np.empty((N, O, P, K))
    grad_t = np.zeros_like(t)
    for k in range(K - 1, 0, -1):
        tk = t[:, k][None, :, None]
        grad_t[:, k] = (a_r * (win_r[:, None, :, k] - prev_r[k]) + a_t * delta[k]).sum(axis=(0, 2))
        gw_r[..., k] = a_r * tk
        gw_t[..., k] = a_t * tk
        a_r = a_r * (1.0 - tk)
        a_t = a_t * (1.0 - tk)
    gw_r[..., 0] = a_r
    gw_t[..., 0] = a_t

    gx_r = np.zeros_like(lr)
    gx_t = np.zeros_like(th)
    rows = np.arange(N)[:, None, None]
    np.add.at(gx_r, (rows, idx[None]), gw_r.sum(axis=1))
    np.add.at(gx_t, (rows, idx[None]), gw_t.sum(axis=1))
    return gx_r, gx_t, grad_t
