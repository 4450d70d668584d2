"""Backend selection for the hot wFM kernels.

The numba backend is used by default.  Set ``SURREAL_BACKEND=numpy`` to force
the pure-numpy path (also used automatically when numba cannot be imported).
``SURREAL_THREADS`` caps the numba thread pool.
"""

import os

import numpy as np

from . import _numpy

BACKEND = os.environ.get("SURREAL_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"SURREAL_BACKEND must be 'numba' or 'numpy', not {BACKEND!r}")

if BACKEND == "numba":
    try:
        from . import _numba as _impl
    except ImportError:  # pragma: no cover - numba missing
        BACKEND = "numpy"
        _impl = _numpy
else:
    _impl = _numpy


def set_threads(n: int) -> None:
    """Cap parallelism; a no-op for the numpy backend."""
    if BACKEND != "numba":
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


if "SURREAL_THREADS" in os.environ:
    set_threads(int(os.environ["SURREAL_THREADS"]))


def _prep(lr, th, idx, t):
    return (
        np.ascontiguousarray(lr, dtype=np.float64),
        np.ascontiguousarray(th, dtype=np.float64),
        np.ascontiguousarray(idx, dtype=np.int64),
        np.ascontiguousarray(t, dtype=np.float64),
    )


def wfm_forward(lr, th, idx, t):
    """Incremental wFM of every gathered window for every output channel."""
    return _impl.wfm_forward(*_prep(lr, th, idx, t))


def wfm_backward(lr, th, idx, t, g_r, g_t):
    """Adjoint of :func:`wfm_forward`: gradients w.r.t. inputs and step fractions."""
    return _impl.wfm_backward(
        *_prep(lr, th, idx, t),
        np.ascontiguousarray(g_r, dtype=np.float64),
        np.ascontiguousarray(g_t, dtype=np.float64),
    )
