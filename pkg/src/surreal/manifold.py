"""Geometry of the punctured complex plane viewed as R+ x SO(2).

A point is stored as ``(log_r, theta)``: log-magnitude and a phase wrapped to
the half-open interval (-pi, pi].  In these coordinates the geodesic distance
is Euclidean with the angular part weighted by sqrt(2), the group of nonzero
complex scalings acts by translation, and geodesics are straight lines.

All functions here are duck-typed over anything exposing ``log_r`` and
``theta``: they work for a single :class:`PolarComplex` and elementwise for a
:class:`ComplexField`.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

TWO_PI = 2.0 * math.pi
DEFAULT_EPS = 1e-12


class InvalidInputError(ValueError):
    """Raised for non-finite, mis-shaped or out-of-range arguments."""


def wrap_angle(x):
    """Wrap angles to (-pi, pi].

    Values already inside the interval are returned untouched, so wrapping is
    bitwise idempotent.  ``wrap_angle(-pi) == pi``.
    """
    if np.ndim(x) == 0:
        x = float(x)
        if -math.pi < x <= math.pi:
            return x
        return math.pi - ((math.pi - x) % TWO_PI)
    x = np.asarray(x, dtype=np.float64)
    inside = (x > -math.pi) & (x <= math.pi)
    if inside.all():
        return x.copy()
    return np.where(inside, x, math.pi - np.mod(math.pi - x, TWO_PI))


@dataclass(frozen=True)
class PolarComplex:
    """A single point of the manifold."""

    log_r: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.log_r) and math.isfinite(self.theta)):
            raise InvalidInputError(f"non-finite point ({self.log_r}, {self.theta})")
        object.__setattr__(self, "log_r", float(self.log_r))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def r(self) -> float:
        return math.exp(self.log_r)


@dataclass(frozen=True)
class GroupElement:
    """An element of (R \\ {0}) x SO(2).

    ``log_scale`` is the log of the *effective* scale r_g**2 applied to
    magnitudes, so r_g and -r_g are the same element here.
    """

    log_scale: float = 0.0
    rot: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.log_scale) and math.isfinite(self.rot)):
            raise InvalidInputError("group element must be finite")
        object.__setattr__(self, "log_scale", float(self.log_scale))
        object.__setattr__(self, "rot", wrap_angle(self.rot))

    @classmethod
    def from_scale_rotation(cls, r_g: float, angle: float) -> "GroupElement":
        """Build from the raw pair (r_g, R_g) with r_g a nonzero real."""
        if r_g == 0 or not math.isfinite(r_g):
            raise InvalidInputError("r_g must be a finite nonzero real")
        return cls(math.log(r_g * r_g), angle)

    @classmethod
    def identity(cls) -> "GroupElement":
        return cls(0.0, 0.0)

    def compose(self, other: "GroupElement") -> "GroupElement":
        """``self * other``: apply ``other`` first, then ``self``."""
        return GroupElement(self.log_scale + other.log_scale, self.rot + other.rot)

    def inverse(self) -> "GroupElement":
        return GroupElement(-self.log_scale, -self.rot)


@dataclass(frozen=True)
class ComplexField:
    """A grid of manifold points, stored as two float64 arrays of equal shape.

    The leading axes are whatever the caller needs: ``(C, *spatial)`` for one
    sample or ``(N, C, *spatial)`` for a batch.  Arrays are row-major, so the
    flat order is channel-major, then rows, then columns.
    """

    log_r: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        log_r = np.asarray(self.log_r, dtype=np.float64)
        theta = np.asarray(self.theta, dtype=np.float64)
        if log_r.shape != theta.shape:
            raise InvalidInputError(f"shape mismatch {log_r.shape} vs {theta.shape}")
        if not (np.isfinite(log_r).all() and np.isfinite(theta).all()):
            raise InvalidInputError("field contains non-finite values")
        object.__setattr__(self, "log_r", log_r)
        object.__setattr__(self, "theta", wrap_angle(theta))

    @property
    def shape(self) -> tuple:
        return self.log_r.shape

    @property
    def size(self) -> int:
        return self.log_r.size

    def __len__(self):
        return len(self.log_r)

    def __getitem__(self, item) -> "ComplexField":
        return ComplexField(self.log_r[item], self.theta[item])

    def reshape(self, *shape) -> "ComplexField":
        return ComplexField(self.log_r.reshape(*shape), self.theta.reshape(*shape))

    def point(self, index) -> PolarComplex:
        return PolarComplex(self.log_r[index], self.theta[index])

    @classmethod
    def from_cartesian(cls, a, b, eps: float = DEFAULT_EPS) -> "ComplexField":
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise InvalidInputError("non-finite cartesian input")
        if eps <= 0:
            raise InvalidInputError("eps must be positive")
        mag = np.hypot(a, b)
        zero = mag == 0
        theta = np.where(zero, 0.0, np.arctan2(b, a))
        return cls(np.log(np.maximum(mag, eps)), theta)

    @classmethod
    def from_complex(cls, z, eps: float = DEFAULT_EPS) -> "ComplexField":
        z = np.asarray(z)
        return cls.from_cartesian(z.real, z.imag, eps)

    def to_cartesian(self) -> tuple[np.ndarray, np.ndarray]:
        r = np.exp(self.log_r)
        return r * np.cos(self.theta), r * np.sin(self.theta)

    def to_complex(self) -> np.ndarray:
        a, b = self.to_cartesian()
        return a + 1j * b


Point = Union[PolarComplex, ComplexField]


def from_cartesian(a: float, b: float, eps: float = DEFAULT_EPS) -> PolarComplex:
    if not (math.isfinite(a) and math.isfinite(b)):
        raise InvalidInputError(f"non-finite input ({a}, {b})")
    if eps <= 0:
        raise InvalidInputError("eps must be positive")
    mag = math.hypot(a, b)
    if mag == 0:
        return PolarComplex(math.log(eps), 0.0)
    return PolarComplex(math.log(max(mag, eps)), math.atan2(b, a))


def to_cartesian(z: Point):
    if isinstance(z, ComplexField):
        return z.to_cartesian()
    r = math.exp(z.log_r)
    return r * math.cos(z.theta), r * math.sin(z.theta)


def _rebuild(z: Point, log_r, theta) -> Point:
    return dataclasses.replace(z, log_r=log_r, theta=theta)


def distance(z1: Point, z2: Point):
    """Geodesic distance sqrt(dlog_r**2 + 2 * dtheta**2)."""
    d_lr = np.subtract(z2.log_r, z1.log_r)
    d_th = wrap_angle(np.subtract(z2.theta, z1.theta))
    out = np.sqrt(d_lr * d_lr + 2.0 * d_th * d_th)
    return float(out) if np.ndim(out) == 0 else out


def act(g: GroupElement, z: Point) -> Point:
    """Left action of ``g``: multiply magnitude by exp(log_scale), rotate by ``rot``."""
    return _rebuild(z, np.add(z.log_r, g.log_scale), wrap_angle(np.add(z.theta, g.rot)))


def transporter(z1: PolarComplex, z2: PolarComplex) -> GroupElement:
    """The unique group element mapping ``z1`` onto ``z2``."""
    return GroupElement(z2.log_r - z1.log_r, wrap_angle(z2.theta - z1.theta))


def geodesic(z1: Point, z2: Point, t: float) -> Point:
    """Point at fraction ``t`` of the shortest path from ``z1`` to ``z2``."""
    if not 0.0 <= t <= 1.0:
        raise InvalidInputError(f"t must lie in [0, 1], got {t}")
    log_r = (1.0 - t) * np.asarray(z1.log_r) + t * np.asarray(z2.log_r)
    theta = wrap_angle(z1.theta + t * wrap_angle(np.subtract(z2.theta, z1.theta)))
    if np.ndim(log_r) == 0:
        log_r = float(log_r)
    return _rebuild(z1, log_r, theta)
