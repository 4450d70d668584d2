"""Network layers on complex fields.

Every layer follows the same small protocol::

    y, cache = layer.forward(x)
    gx, grads = layer.backward(cache, gy)

Complex activations are batched :class:`ComplexField` objects of shape
``(N, C, *spatial)`` and their gradients are ``(g_log_r, g_theta)`` array
pairs.  ``grads`` is aligned with ``layer.params``.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import kernels
from .manifold import ComplexField, InvalidInputError, wrap_angle
from .wfm import ConvexWeights, softmax, step_fractions, step_fractions_backward


def _as_tuple(v, ndim: int) -> tuple[int, ...]:
    if np.ndim(v) == 0:
        return (int(v),) * ndim
    v = tuple(int(x) for x in v)
    if len(v) != ndim:
        raise InvalidInputError(f"expected {ndim} extents, got {v}")
    return v


def conv_output_shape(spatial: Sequence[int], kernel: Sequence[int], stride: Sequence[int]) -> tuple[int, ...]:
    out = []
    for s, k, st in zip(spatial, kernel, stride):
        if s < k:
            raise InvalidInputError(f"spatial extent {s} smaller than kernel {k}")
        out.append((s - k) // st + 1)
    return tuple(out)


def window_index(in_shape: Sequence[int], kernel: Sequence[int], stride: Sequence[int]) -> np.ndarray:
    """Gather table ``(P, K)`` into a flattened ``(C, *spatial)`` sample.

    Rows follow output positions in row-major order; columns follow the
    canonical window order: channel-major, then rows, then columns.
    """
    in_shape = tuple(in_shape)
    d = len(in_shape) - 1
    out = conv_output_shape(in_shape[1:], kernel, stride)
    off = np.indices((in_shape[0], *kernel)).reshape(d + 1, -1)
    starts = np.indices(out).reshape(d, -1) * np.asarray(stride)[:, None]
    coords = [np.broadcast_to(off[0][None, :], (starts.shape[1], off.shape[1]))]
    coords += [starts[i][:, None] + off[i + 1][None, :] for i in range(d)]
    return np.ravel_multi_index(tuple(coords), in_shape).astype(np.int64)


def _init_logits(rng, shape):
    if rng is None:
        return np.zeros(shape)
    return rng.uniform(-0.01, 0.01, size=shape)


class WFMConv:
    """wFM convolution: each output is the weighted Frechet mean of a window.

    One set of convex weights (``in_channels * prod(kernel)`` logits) per
    output channel.  No padding.
    """

    def __init__(self, in_channels, out_channels, kernel, stride=None, logits=None, rng=None):
        self.kernel = _as_tuple(kernel, np.size(kernel))
        self.stride = _as_tuple(self.kernel if stride is None else stride, len(self.kernel))
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        if self.in_channels < 1 or self.out_channels < 1:
            raise InvalidInputError("channel counts must be positive")
        k = self.in_channels * math.prod(self.kernel)
        if logits is None:
            logits = _init_logits(rng, (self.out_channels, k))
        self.logits = np.asarray(logits, dtype=np.float64)
        if self.logits.shape != (self.out_channels, k):
            raise InvalidInputError(f"logits must have shape {(self.out_channels, k)}")
        self._idx = {}

    @property
    def params(self):
        return [self.logits]

    def weights(self, o: int) -> ConvexWeights:
        return ConvexWeights(self.logits[o])

    def output_shape(self, in_shape):
        return (self.out_channels, *conv_output_shape(in_shape[1:], self.kernel, self.stride))

    def _index(self, in_shape):
        if in_shape not in self._idx:
            self._idx[in_shape] = window_index(in_shape, self.kernel, self.stride)
        return self._idx[in_shape]

    def forward(self, x: ComplexField):
        if x.log_r.ndim != len(self.kernel) + 2 or x.shape[1] != self.in_channels:
            raise InvalidInputError(
                f"expected (N, {self.in_channels}, <{len(self.kernel)} spatial dims>), got {x.shape}"
            )
        in_shape = x.shape[1:]
        out_shape = self.output_shape(in_shape)
        idx = self._index(in_shape)
        n = x.shape[0]
        lr = x.log_r.reshape(n, -1)
        th = x.theta.reshape(n, -1)
        t = step_fractions(self.logits)
        y_r, y_t = kernels.wfm_forward(lr, th, idx, t)
        y = ComplexField(y_r.reshape(n, *out_shape), y_t.reshape(n, *out_shape))
        return y, (lr, th, idx, t, x.shape)

    def backward(self, cache, gy):
        lr, th, idx, t, in_shape = cache
        n = lr.shape[0]
        g_r = gy[0].reshape(n, self.out_channels, -1)
        g_t = gy[1].reshape(n, self.out_channels, -1)
        gx_r, gx_t, grad_t = kernels.wfm_backward(lr, th, idx, t, g_r, g_t)
        grad_logits = step_fractions_backward(self.logits, grad_t)
        return (gx_r.reshape(in_shape), gx_t.reshape(in_shape)), [grad_logits]


class TReLU:
    """Tangent ReLU: ``(log_r, theta) -> (max(log_r, 0), max(theta, 0))``."""

    params: list = []

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x: ComplexField):
        mask_r = x.log_r > 0
        mask_t = x.theta > 0
        return trelu(x), (mask_r, mask_t)

    def backward(self, cache, gy):
        mask_r, mask_t = cache
        return (gy[0] * mask_r, gy[1] * mask_t), []


class DistanceFC:
    """Distance transform from ``m`` complex channels to real features.

    For each output channel the wFM of the ``m`` input channels is taken
    position by position (product manifold over the ``s`` spatial sites),
    then every input channel is replaced by its product-manifold distance to
    that mean.  Output shape ``(N, out_channels, m)``; invariant under a
    global group action on the input.
    """

    def __init__(self, in_channels, out_channels, logits=None, rng=None):
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        if self.in_channels < 1 or self.out_channels < 1:
            raise InvalidInputError("channel counts must be positive")
        if logits is None:
            logits = _init_logits(rng, (self.out_channels, self.in_channels))
        self.logits = np.asarray(logits, dtype=np.float64)
        if self.logits.shape != (self.out_channels, self.in_channels):
            raise InvalidInputError(f"logits must have shape {(self.out_channels, self.in_channels)}")

    @property
    def params(self):
        return [self.logits]

    def weights(self, o: int) -> ConvexWeights:
        return ConvexWeights(self.logits[o])

    def output_shape(self, in_shape):
        return (self.out_channels, self.in_channels)

    def forward(self, x: ComplexField):
        if x.log_r.ndim < 2 or x.shape[1] != self.in_channels:
            raise InvalidInputError(f"expected (N, {self.in_channels}, ...), got {x.shape}")
        n, m = x.shape[:2]
        xr = x.log_r.reshape(n, m, -1)
        xt = x.theta.reshape(n, m, -1)
        s = xr.shape[2]
        idx = (np.arange(m)[None, :] * s + np.arange(s)[:, None]).astype(np.int64)
        lr = xr.reshape(n, -1)
        th = xt.reshape(n, -1)
        t = step_fractions(self.logits)
        mean_r, mean_t = kernels.wfm_forward(lr, th, idx, t)  # (N, O, s)
        d_r = xr[:, None, :, :] - mean_r[:, :, None, :]  # (N, O, m, s)
        d_t = wrap_angle(xt[:, None, :, :] - mean_t[:, :, None, :])
        u = np.sqrt((d_r * d_r + 2.0 * d_t * d_t).sum(axis=-1))
        return u, (lr, th, idx, t, d_r, d_t, u, x.shape)

    def backward(self, cache, gu):
        lr, th, idx, t, d_r, d_t, u, in_shape = cache
        n, m = in_shape[:2]
        # sqrt has no derivative at 0; use the zero subgradient there
        coef = np.divide(gu, u, out=np.zeros_like(u), where=u > 0)[..., None]
        gd_r = coef * d_r
        gd_t = 2.0 * coef * d_t
        gx_r = gd_r.sum(axis=1).reshape(n, -1)
        gx_t = gd_t.sum(axis=1).reshape(n, -1)
        g_mr, g_mt, grad_t = kernels.wfm_backward(lr, th, idx, t, -gd_r.sum(axis=2), -gd_t.sum(axis=2))
        gx_r += g_mr
        gx_t += g_mt
        grad_logits = step_fractions_backward(self.logits, grad_t)
        return (gx_r.reshape(in_shape), gx_t.reshape(in_shape)), [grad_logits]


class Dense:
    """Affine map on real features, ``y = x @ W.T + b``."""

    def __init__(self, fan_in, fan_out, W=None, b=None, rng=None):
        bound = 1.0 / math.sqrt(fan_in)
        if W is None:
            W = rng.uniform(-bound, bound, (fan_out, fan_in)) if rng is not None else np.zeros((fan_out, fan_in))
        if b is None:
            b = rng.uniform(-bound, bound, fan_out) if rng is not None else np.zeros(fan_out)
        self.W = np.asarray(W, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        if self.W.shape != (fan_out, fan_in) or self.b.shape != (fan_out,):
            raise InvalidInputError("dense weight shapes do not conform")

    @property
    def params(self):
        return [self.W, self.b]

    def forward(self, x):
        shape = x.shape
        x = x.reshape(len(x), -1)
        if x.shape[1] != self.W.shape[1]:
            raise InvalidInputError(f"expected {self.W.shape[1]} features, got {x.shape[1]}")
        return x @ self.W.T + self.b, (x, shape)

    def backward(self, cache, gy):
        x, shape = cache
        return (gy @ self.W).reshape(shape), [gy.T @ x, gy.sum(axis=0)]


class ReLU:
    params: list = []

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, mask, gy):
        return gy * mask, []


# functional forms ------------------------------------------------------------


def _batched(x: ComplexField, spatial_rank: int):
    if x.log_r.ndim == spatial_rank + 1:
        return x[None], True
    return x, False


def wfm_conv(x: ComplexField, layer: WFMConv) -> ComplexField:
    """Apply a :class:`WFMConv` to one ``(C, *spatial)`` field or a batch."""
    xb, single = _batched(x, len(layer.kernel))
    y, _ = layer.forward(xb)
    return y[0] if single else y


def trelu(x: ComplexField) -> ComplexField:
    return ComplexField(np.maximum(x.log_r, 0.0), np.maximum(x.theta, 0.0))


def distance_fc(x: ComplexField, layer: DistanceFC, batch: bool = False) -> np.ndarray:
    """Distance transform of one ``(m, *spatial)`` field (or a batch if ``batch``)."""
    if batch:
        return layer.forward(x)[0]
    return layer.forward(x[None])[0][0]


def normalize_unit_modulus(x: ComplexField) -> ComplexField:
    """Drop magnitude information: every point moved to the unit circle."""
    return ComplexField(np.zeros_like(x.log_r), x.theta)


def softmax_head(u: np.ndarray, W: np.ndarray, b: np.ndarray, batch: bool = False) -> np.ndarray:
    """Affine map of the flattened features followed by softmax over classes."""
    u = np.asarray(u, dtype=np.float64)
    flat = u.reshape(len(u), -1) if batch else u.reshape(-1)
    if flat.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise InvalidInputError(f"head shapes do not conform: {u.shape}, {W.shape}, {b.shape}")
    return softmax(flat @ W.T + b)
