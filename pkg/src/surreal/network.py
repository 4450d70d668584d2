"""Model descriptions, the complex-valued classifier and the real baseline.

A model is described by a :class:`ModelSpec` and serialised as plain
``key = value`` lines::

    input = 1 16 16
    classes = 4
    layer = conv out=8 kernel=2,2 stride=2,2
    layer = trelu
    layer = conv out=16 kernel=2,2 stride=2,2
    layer = distance_fc out=4
    head_hidden =

Lines starting with ``#`` are comments.  ``layer`` may repeat; every other
key is single-valued.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .layers import Dense, DistanceFC, ReLU, TReLU, WFMConv, conv_output_shape
from .manifold import ComplexField, InvalidInputError
from .wfm import softmax


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; repeated ``layer`` keys are collected in a list."""
    cfg: dict = {"layer": []}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "layer":
            cfg["layer"].append(value)
        elif key in cfg:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        else:
            cfg[key] = value
    return cfg


def parse_ints(value: str) -> tuple[int, ...]:
    value = value.replace(",", " ").replace("x", " ")
    try:
        return tuple(int(v) for v in value.split())
    except ValueError:
        raise ConfigError(f"expected integers, got {value!r}") from None


@dataclass(frozen=True)
class ConvLayer:
    out: int
    kernel: tuple[int, ...]
    stride: tuple[int, ...]

    def to_config(self) -> str:
        k = ",".join(map(str, self.kernel))
        s = ",".join(map(str, self.stride))
        return f"conv out={self.out} kernel={k} stride={s}"


@dataclass(frozen=True)
class TReLULayer:
    def to_config(self) -> str:
        return "trelu"


@dataclass(frozen=True)
class DistanceFCLayer:
    out: int

    def to_config(self) -> str:
        return f"distance_fc out={self.out}"


def parse_layer(value: str):
    kind, *opts = value.split()
    kw = {}
    for opt in opts:
        if "=" not in opt:
            raise ConfigError(f"layer option {opt!r} is not key=value")
        k, v = opt.split("=", 1)
        kw[k] = v
    try:
        if kind == "conv":
            kernel = parse_ints(kw["kernel"])
            stride = parse_ints(kw["stride"]) if "stride" in kw else kernel
            return ConvLayer(int(kw["out"]), kernel, stride)
        if kind == "trelu":
            return TReLULayer()
        if kind == "distance_fc":
            return DistanceFCLayer(int(kw["out"]))
    except KeyError as e:
        raise ConfigError(f"layer {kind!r} is missing option {e.args[0]!r}") from None
    raise ConfigError(f"unknown layer kind {kind!r}")


@dataclass(frozen=True)
class ModelSpec:
    input_shape: tuple[int, ...]
    classes: int
    layers: tuple = ()
    head_hidden: tuple[int, ...] = ()

    @classmethod
    def from_mapping(cls, cfg: dict) -> "ModelSpec":
        for key in ("input", "classes"):
            if key not in cfg:
                raise ConfigError(f"model config is missing {key!r}")
        spec = cls(
            input_shape=parse_ints(cfg["input"]),
            classes=int(cfg["classes"]),
            layers=tuple(parse_layer(v) for v in cfg.get("layer", [])),
            head_hidden=parse_ints(cfg.get("head_hidden", "")),
        )
        spec.validate()
        return spec

    @classmethod
    def from_config(cls, text: str) -> "ModelSpec":
        return cls.from_mapping(parse_config(text))

    def to_config(self) -> str:
        lines = [
            f"input = {' '.join(map(str, self.input_shape))}",
            f"classes = {self.classes}",
            *(f"layer = {layer.to_config()}" for layer in self.layers),
            f"head_hidden = {' '.join(map(str, self.head_hidden))}",
        ]
        return "\n".join(lines) + "\n"

    def shapes(self) -> list[tuple[int, ...]]:
        """Per-sample activation shape after each layer (input first)."""
        shapes = [tuple(self.input_shape)]
        for layer in self.layers:
            cur = shapes[-1]
            if isinstance(layer, ConvLayer):
                if len(layer.kernel) != len(cur) - 1:
                    raise ConfigError(f"kernel {layer.kernel} does not match activation {cur}")
                shapes.append((layer.out, *conv_output_shape(cur[1:], layer.kernel, layer.stride)))
            elif isinstance(layer, TReLULayer):
                shapes.append(cur)
            else:
                shapes.append((layer.out, cur[0]))
        return shapes

    def validate(self) -> None:
        if self.classes < 1 or len(self.input_shape) < 2 or min(self.input_shape) < 1:
            raise ConfigError("need classes >= 1 and input = channels plus spatial extents")
        fc = [i for i, layer in enumerate(self.layers) if isinstance(layer, DistanceFCLayer)]
        if fc != [len(self.layers) - 1]:
            raise ConfigError("exactly one distance_fc layer is required, and it must come last")
        try:
            self.shapes()
        except InvalidInputError as e:
            raise ConfigError(str(e)) from None

    @property
    def has_trelu(self) -> bool:
        return any(isinstance(layer, TReLULayer) for layer in self.layers)

    def without_trelu(self) -> "ModelSpec":
        return replace(self, layers=tuple(l for l in self.layers if not isinstance(l, TReLULayer)))


def param_count(model) -> int:
    """Number of trainable scalars of a :class:`ModelSpec`, network or baseline."""
    if isinstance(model, (ComplexNet, BaselineMLP)):
        return int(sum(p.size for p in model.params))
    total = 0
    shape = tuple(model.input_shape)
    fc_width = None
    for layer in model.layers:
        if isinstance(layer, ConvLayer):
            total += layer.out * shape[0] * math.prod(layer.kernel)
            shape = (layer.out, *conv_output_shape(shape[1:], layer.kernel, layer.stride))
        elif isinstance(layer, DistanceFCLayer):
            total += layer.out * shape[0]
            fc_width = layer.out * shape[0]
            shape = (layer.out, shape[0])
    if fc_width is not None:
        widths = [fc_width, *model.head_hidden, model.classes]
        total += sum((a + 1) * b for a, b in zip(widths[:-1], widths[1:]))
    return total


class _Classifier:
    """Shared plumbing: parameter list, flat views, loss gradient and prediction."""

    stages: list

    @property
    def params(self) -> list[np.ndarray]:
        return [p for stage in self.stages for p in stage.params]

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params]) if self.params else np.zeros(0)

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != param_count(self):
            raise InvalidInputError(f"expected {param_count(self)} parameters, got {flat.size}")
        i = 0
        for p in self.params:
            p[...] = flat[i : i + p.size].reshape(p.shape)
            i += p.size

    def forward(self, x: ComplexField):
        logits, cache = self.forward_logits(x)
        return softmax(logits), (cache, logits)

    def logits(self, x: ComplexField) -> np.ndarray:
        return self.forward_logits(x)[0]

    def predict(self, x: ComplexField) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def backward(self, cached, labels) -> list[np.ndarray]:
        """Gradients of the batch-mean cross-entropy, aligned with ``params``."""
        caches, logits = cached
        labels = np.asarray(labels)
        n = len(logits)
        g = softmax(logits)
        g[np.arange(n), labels] -= 1.0
        g /= n
        grads: list = []
        for stage, cache in zip(reversed(self.stages), reversed(caches)):
            g, pg = stage.backward(cache, g)
            grads = pg + grads
        return grads

    def _run(self, stages: Iterable, h):
        caches = []
        for stage in stages:
            h, cache = stage.forward(h)
            caches.append(cache)
        return h, caches


class ComplexNet(_Classifier):
    """wFM conv / tReLU stack, distance transform, real-valued softmax head."""

    def __init__(self, spec: ModelSpec, seed: int | None = 0):
        spec.validate()
        self.spec = spec
        rng = np.random.default_rng(seed) if seed is not None else None
        shapes = spec.shapes()
        self.stages = []
        for layer, shape in zip(spec.layers, shapes):
            if isinstance(layer, ConvLayer):
                self.stages.append(WFMConv(shape[0], layer.out, layer.kernel, layer.stride, rng=rng))
            elif isinstance(layer, TReLULayer):
                self.stages.append(TReLU())
            else:
                self.stages.append(DistanceFC(shape[0], layer.out, rng=rng))
        widths = [math.prod(shapes[-1]), *spec.head_hidden, spec.classes]
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            if i:
                self.stages.append(ReLU())
            self.stages.append(Dense(a, b, rng=rng))

    @property
    def complex_stages(self):
        return [s for s in self.stages if isinstance(s, (WFMConv, TReLU))]

    def forward_logits(self, x: ComplexField):
        if tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise InvalidInputError(f"expected inputs of shape (N, {self.spec.input_shape}), got {x.shape}")
        return self._run(self.stages, x)

    def activations(self, x: ComplexField) -> list[ComplexField]:
        """Complex feature maps after each conv/tReLU stage."""
        out = []
        h = x
        for stage in self.complex_stages:
            h, _ = stage.forward(h)
            out.append(h)
        return out

    def branch_signature(self, cached) -> np.ndarray:
        """Boolean pattern of every kink the forward pass went through."""
        caches, _ = cached
        parts = []
        for stage, cache in zip(self.stages, caches):
            if isinstance(stage, TReLU):
                parts += [cache[0].ravel(), cache[1].ravel()]
            elif isinstance(stage, ReLU):
                parts.append(cache.ravel())
            elif isinstance(stage, DistanceFC):
                parts.append((cache[6] > 0).ravel())
        return np.concatenate(parts) if parts else np.zeros(0, dtype=bool)


@dataclass(frozen=True)
class BaselineSpec:
    input_shape: tuple[int, ...]
    hidden: tuple[int, ...] = (64,)
    classes: int = 2


def cartesian_features(x: ComplexField) -> np.ndarray:
    """``(a, b)`` two-channel real embedding, flattened per sample."""
    a, b = x.to_cartesian()
    return np.concatenate([a.reshape(len(a), -1), b.reshape(len(b), -1)], axis=1)


class BaselineMLP(_Classifier):
    """Real-valued MLP on the two-channel ``(a, b)`` view of the input."""

    def __init__(self, spec: BaselineSpec, seed: int | None = 0):
        self.spec = spec
        rng = np.random.default_rng(seed) if seed is not None else None
        widths = [2 * math.prod(spec.input_shape), *spec.hidden, spec.classes]
        self.stages = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            if i:
                self.stages.append(ReLU())
            self.stages.append(Dense(a, b, rng=rng))

    def forward_logits(self, x: ComplexField):
        if tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise InvalidInputError(f"expected inputs of shape (N, {self.spec.input_shape}), got {x.shape}")
        return self._run(self.stages, cartesian_features(x))

    def branch_signature(self, cached) -> np.ndarray:
        caches, _ = cached
        parts = [c.ravel() for s, c in zip(self.stages, caches) if isinstance(s, ReLU)]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=bool)
