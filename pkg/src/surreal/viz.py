"""HSV rendering of complex fields and per-channel response maps, as PPM files."""

from __future__ import annotations

import colorsys
import math
from pathlib import Path

import numpy as np

from .manifold import ComplexField, InvalidInputError


def _as_image(a: np.ndarray) -> np.ndarray:
    """Promote a 1-D signal to a one-row image."""
    if a.ndim == 1:
        return a[None, :]
    if a.ndim != 2:
        raise InvalidInputError(f"expected a 1-D or 2-D field, got shape {a.shape}")
    return a


def _normalise(v: np.ndarray) -> np.ndarray:
    top = v.max() if v.size else 0.0
    return v / top if top > 0 else np.zeros_like(v)


def hsv_image(field: ComplexField) -> np.ndarray:
    """RGB ``uint8`` image: hue from phase, value from magnitude scaled to the image maximum."""
    theta = _as_image(field.theta)
    value = _normalise(np.exp(_as_image(field.log_r)))
    hue = (theta + math.pi) / (2 * math.pi)
    rgb = np.empty((*theta.shape, 3))
    for i in np.ndindex(theta.shape):
        rgb[i] = colorsys.hsv_to_rgb(hue[i] % 1.0, 1.0, value[i])
    return np.round(rgb * 255).astype(np.uint8)


def gray_image(values: np.ndarray) -> np.ndarray:
    v = _normalise(np.abs(_as_image(np.asarray(values, dtype=np.float64))))
    return np.repeat(np.round(v * 255).astype(np.uint8)[..., None], 3, axis=-1)


def write_ppm(path, rgb: np.ndarray) -> Path:
    """Write a binary (P6) PPM."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise InvalidInputError("expected an (H, W, 3) image")
    path = Path(path)
    h, w = rgb.shape[:2]
    path.write_bytes(f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes())
    return path


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6" or int(parts[3]) != 255:
        raise InvalidInputError("not an 8-bit P6 image")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)


def render_field(field: ComplexField, outdir, stem: str = "input") -> list[Path]:
    """One HSV image per channel of a ``(C, *spatial)`` field."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return [write_ppm(outdir / f"{stem}_c{c:02d}.ppm", hsv_image(field[c])) for c in range(field.shape[0])]


def render_responses(model, field: ComplexField, outdir, layer: int) -> list[Path]:
    """Per-channel magnitude maps of the activation after complex stage ``layer`` (1-based)."""
    acts = model.activations(field[None])
    if not 1 <= layer <= len(acts):
        raise InvalidInputError(f"layer must be in [1, {len(acts)}], got {layer}")
    act = acts[layer - 1][0]
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return [
        write_ppm(outdir / f"layer{layer}_c{c:02d}.ppm", gray_image(np.exp(act.log_r[c])))
        for c in range(act.shape[0])
    ]
