"""Weighted Frechet mean on R+ x SO(2).

The workhorse is the one-pass incremental estimator

    m <- z_1;  m <- geodesic(m, z_k, w_k / (w_1 + ... + w_k))  for k = 2..K

which is what the convolution and distance layers evaluate and differentiate.
:func:`wfm_oracle` minimises the weighted variance directly and exists to
check the estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .manifold import (
    TWO_PI,
    InvalidInputError,
    PolarComplex,
    distance,
    geodesic,
    wrap_angle,
)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass(frozen=True)
class ConvexWeights:
    """Positive weights summing to one, parameterised by unconstrained logits."""

    logits: np.ndarray
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        logits = np.atleast_1d(np.asarray(self.logits, dtype=np.float64))
        if logits.ndim != 1 or logits.size == 0:
            raise InvalidInputError("logits must be a non-empty 1-D array")
        if not np.isfinite(logits).all():
            raise InvalidInputError("logits must be finite")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "weights", softmax(logits))

    @classmethod
    def uniform(cls, k: int) -> "ConvexWeights":
        return cls(np.zeros(k))

    @classmethod
    def from_weights(cls, weights) -> "ConvexWeights":
        w = np.asarray(weights, dtype=np.float64)
        if (w <= 0).any():
            raise InvalidInputError("weights must be strictly positive")
        return cls(np.log(w / w.sum()))

    def __len__(self):
        return self.logits.size


def step_fractions(logits: np.ndarray) -> np.ndarray:
    """Geodesic step sizes ``t_k = w_k / cumsum(w)_k`` along the last axis.

    ``t_k`` only depends on the first ``k`` logits; ``t_0`` is always 1.
    """
    w = softmax(np.asarray(logits, dtype=np.float64))
    return w / np.cumsum(w, axis=-1)


def step_fractions_backward(logits: np.ndarray, grad_t: np.ndarray) -> np.ndarray:
    """Chain ``dL/dt`` back through :func:`step_fractions` to ``dL/dlogits``."""
    w = softmax(np.asarray(logits, dtype=np.float64))
    s = np.cumsum(w, axis=-1)
    # dt_k/dw_j = [j == k] / s_k - w_k / s_k**2   for j <= k
    tail = np.flip(np.cumsum(np.flip(grad_t * w / (s * s), -1), axis=-1), -1)
    grad_w = grad_t / s - tail
    return w * (grad_w - (w * grad_w).sum(axis=-1, keepdims=True))


def _check(points: Sequence[PolarComplex], weights: ConvexWeights | None = None):
    if len(points) == 0:
        raise InvalidInputError("need at least one point")
    if weights is not None and len(weights) != len(points):
        raise InvalidInputError(f"{len(points)} points but {len(weights)} weights")


def weighted_variance(points: Sequence[PolarComplex], weights: ConvexWeights, m: PolarComplex) -> float:
    _check(points, weights)
    return float(sum(w * distance(z, m) ** 2 for z, w in zip(points, weights.weights)))


def wfm_incremental(points: Sequence[PolarComplex], weights: ConvexWeights) -> PolarComplex:
    _check(points, weights)
    t = step_fractions(weights.logits)
    m = points[0]
    for z, tk in zip(points[1:], t[1:]):
        m = geodesic(m, z, float(tk))
    return m


def wfm_field(window: Sequence[PolarComplex], weights: ConvexWeights) -> PolarComplex:
    """wFM of one convolution window.

    ``window`` must already be flattened channel-major, then row-major over
    space; the incremental estimator is order sensitive.
    """
    return wfm_incremental(window, weights)


def _angular_cost(thetas: np.ndarray, w: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = wrap_angle(thetas[None, :] - c[:, None])
    return 2.0 * (d * d) @ w


def wfm_oracle(
    points: Sequence[PolarComplex],
    weights: ConvexWeights,
    iters: int = 200,
    lr: float = 0.1,
    grid: int = 10_000,
    full_output: bool = False,
):
    """Brute-force minimiser of the weighted variance.

    The log-magnitude part is solved exactly (weighted arithmetic mean).  The
    angle is found by exhaustive search over ``grid`` candidates in (-pi, pi]
    followed by ``iters`` steps of monotone gradient descent and a final exact
    step to the minimiser of the local quadratic piece.  Ties are broken
    in favour of the first grid candidate; with ``full_output`` the second
    return value reports whether a distinct candidate attained the same cost.
    """
    _check(points, weights)
    w = weights.weights
    log_r = float(np.dot(w, [z.log_r for z in points]))
    thetas = np.array([z.theta for z in points])

    cands = -math.pi + TWO_PI * np.arange(1, grid + 1) / grid
    cost = _angular_cost(thetas, w, cands)
    best = int(np.argmin(cost))
    fmin = cost[best]
    near = np.abs(cost - fmin) <= 1e-12 * max(1.0, fmin)
    sep = np.abs(wrap_angle(cands - cands[best]))
    tied = bool((near & (sep > 4 * TWO_PI / grid)).any())

    theta, f = cands[best], fmin
    for _ in range(iters):
        grad = -4.0 * float(np.dot(w, wrap_angle(thetas - theta)))
        if grad == 0.0:
            break
        cand = wrap_angle(theta - lr * grad)
        fc = float(_angular_cost(thetas, w, np.array([cand]))[0])
        if fc < f:
            theta, f = cand, fc
        else:
            lr *= 0.5
    # cost differences vanish below ~sqrt(eps); finish with exact steps to the
    # minimiser of the local quadratic piece, kept unless they worsen the cost beyond round-off
    for _ in range(3):
        cand = wrap_angle(theta + float(np.dot(w, wrap_angle(thetas - theta))))
        fc = float(_angular_cost(thetas, w, np.array([cand]))[0])
        if fc > f + 1e-12 * max(1.0, f):
            break
        theta, f = cand, fc
    m = PolarComplex(log_r, theta)
    return (m, tied) if full_output else m
