"""Datasets: the CPLX1 tensor format, manifests, synthetic generators and splits.

CPLX1 layout (all integers and floats little-endian)::

    offset 0   5 bytes   magic b"CPLX1"
    offset 5   u8        dtype: 0 = complex128 as interleaved (re, im) f64, 1 = f64 real
    offset 6   u8        rank (<= 8)
    offset 7   rank x u64 extents
    then       payload in row-major order

A manifest is a CSV file with header ``path,label``; relative paths are
resolved against the manifest's directory.
"""

from __future__ import annotations

import csv
import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .manifold import ComplexField, GroupElement, InvalidInputError, act, wrap_angle

MAGIC = b"CPLX1"
DTYPE_COMPLEX = 0
DTYPE_REAL = 1
MAX_RANK = 8
_ITEM = {DTYPE_COMPLEX: np.dtype("<c16"), DTYPE_REAL: np.dtype("<f8")}


class FormatError(ValueError):
    """Malformed CPLX1 data; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def encode_cplx(tensor) -> bytes:
    if isinstance(tensor, ComplexField):
        tensor = tensor.to_complex()
    arr = np.asarray(tensor)
    if np.iscomplexobj(arr):
        dtype = DTYPE_COMPLEX
    elif arr.dtype.kind in "fiub":
        dtype = DTYPE_REAL
    else:
        raise InvalidInputError(f"cannot store dtype {arr.dtype}")
    if arr.ndim > MAX_RANK:
        raise InvalidInputError(f"rank {arr.ndim} exceeds {MAX_RANK}")
    header = MAGIC + struct.pack("<BB", dtype, arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=_ITEM[dtype]).tobytes()


def decode_cplx(buf: bytes) -> np.ndarray:
    if len(buf) < 7:
        raise FormatError("truncated header", len(buf))
    if buf[:5] != MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:5])!r}", 0)
    dtype, rank = buf[5], buf[6]
    if dtype not in _ITEM:
        raise FormatError(f"unknown dtype code {dtype}", 5)
    if rank > MAX_RANK:
        raise FormatError(f"rank {rank} exceeds {MAX_RANK}", 6)
    end = 7 + 8 * rank
    if len(buf) < end:
        raise FormatError("truncated extents", len(buf))
    shape = struct.unpack(f"<{rank}Q", buf[7:end])
    nbytes = math.prod(shape) * _ITEM[dtype].itemsize
    if len(buf) < end + nbytes:
        raise FormatError(f"truncated payload: expected {nbytes} bytes", len(buf))
    if len(buf) > end + nbytes:
        raise FormatError("trailing bytes after payload", end + nbytes)
    arr = np.frombuffer(buf, dtype=_ITEM[dtype], count=math.prod(shape), offset=end)
    return arr.reshape(shape).astype(_ITEM[dtype].newbyteorder("="), copy=True)


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def save_cplx(tensor, path) -> None:
    """Write a complex or real array (or a :class:`ComplexField`) as CPLX1."""
    _atomic_write(path, encode_cplx(tensor))


def load_cplx(path) -> np.ndarray:
    return decode_cplx(Path(path).read_bytes())


def load_field(path) -> ComplexField:
    arr = load_cplx(path)
    return ComplexField.from_complex(arr) if np.iscomplexobj(arr) else ComplexField.from_cartesian(arr, 0.0)


# datasets ---------------------------------------------------------------------


@dataclass(frozen=True)
class LabeledSample:
    field: ComplexField
    label: int


@dataclass(frozen=True)
class Dataset:
    """A batch of same-shaped fields ``(N, C, *spatial)`` with integer labels."""

    x: ComplexField
    labels: np.ndarray
    classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (self.x.shape[0],):
            raise InvalidInputError("one label per sample required")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.classes):
            raise InvalidInputError(f"labels must lie in [0, {self.classes})")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> LabeledSample:
        return LabeledSample(self.x[i], int(self.labels[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return tuple(self.x.shape[1:])

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.x[indices], self.labels[indices], self.classes)

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.classes)

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample], classes: int | None = None) -> "Dataset":
        if not samples:
            raise InvalidInputError("empty dataset")
        labels = np.array([s.label for s in samples])
        x = ComplexField(np.stack([s.field.log_r for s in samples]), np.stack([s.field.theta for s in samples]))
        return cls(x, labels, int(labels.max()) + 1 if classes is None else classes)


def read_manifest(path, classes: int | None = None) -> Dataset:
    path = Path(path)
    samples = []
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            p = Path(row["path"])
            samples.append(LabeledSample(load_field(p if p.is_absolute() else path.parent / p), int(row["label"])))
    return Dataset.from_samples(samples, classes)


def write_dataset(dataset: Dataset, outdir, stem: str = "sample") -> Path:
    """One CPLX1 file per sample plus ``manifest.csv``; returns the manifest path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    z = dataset.x.to_complex()
    rows = []
    for i in range(len(dataset)):
        name = f"{stem}_{i:05d}.cplx"
        save_cplx(z[i], outdir / name)
        rows.append((name, int(dataset.labels[i])))
    manifest = outdir / "manifest.csv"
    with manifest.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label"])
        writer.writerows(rows)
    return manifest


# synthetic data ---------------------------------------------------------------

MODES = ("phase", "magnitude", "mixed")


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic generator.

    Each class owns a fixed smooth random phase texture on a periodic canvas
    (seeded by ``pattern_seed``, so every sample seed sees the same classes).
    A sample is a crop of its class canvas at a random offset, multiplied by
    a random unit complex number, plus wrapped Gaussian phase noise.  This
    mimics target chips with unknown position and unknown complex gain.

    2-D classes differ in texture orientation (``k * pi / classes``); 1-D
    classes differ in bandwidth.  ``depth`` is the texture's standard
    deviation in radians and ``bandwidth`` its spectral width in cycles per
    sample along the class orientation.
    """

    mode: str = "phase"
    classes: int = 4
    shape: tuple[int, ...] = (32, 32)
    sigma: float = 0.3
    per_class: int = 100
    seed: int = 0
    depth: float = 3.0
    bandwidth: float = 0.08
    canvas: int = 256
    pattern_seed: int = 1234
    global_rotation: bool = True
    random_offset: bool = True

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in np.atleast_1d(self.shape)))
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.classes < 1 or self.per_class < 1:
            raise InvalidInputError("classes and per_class must be positive")
        if len(self.shape) not in (1, 2) or min(self.shape) < 1:
            raise InvalidInputError(f"shape must be 1-D or 2-D with positive extents, got {self.shape}")
        if max(self.shape) > self.canvas:
            raise InvalidInputError("sample shape exceeds the canvas")
        if not (self.sigma >= 0 and self.depth >= 0 and self.bandwidth > 0):
            raise InvalidInputError("sigma and depth must be non-negative, bandwidth positive")


def class_pattern(spec: SynthSpec, k: int) -> np.ndarray:
    """Periodic zero-mean texture of class ``k`` with unit standard deviation."""
    rng = np.random.default_rng([spec.pattern_seed, k])
    d = len(spec.shape)
    white = rng.normal(size=(spec.canvas,) * d)
    if d == 1:
        f = np.fft.fftfreq(spec.canvas)
        width = spec.bandwidth * 2.0 * (k + 1) / spec.classes
        env = np.exp(-(f**2) / (2.0 * width**2))
        field = np.fft.ifft(np.fft.fft(white) * env).real
    else:
        fy, fx = np.meshgrid(np.fft.fftfreq(spec.canvas), np.fft.fftfreq(spec.canvas), indexing="ij")
        beta = k * math.pi / spec.classes
        along = fx * math.cos(beta) + fy * math.sin(beta)
        across = -fx * math.sin(beta) + fy * math.cos(beta)
        perp = spec.bandwidth / 4.0
        env = np.exp(-(along**2) / (2.0 * spec.bandwidth**2) - across**2 / (2.0 * perp**2))
        field = np.fft.ifft2(np.fft.fft2(white) * env).real
    field -= field.mean()
    return field / field.std()


def _crop(canvas: np.ndarray, offset, shape) -> np.ndarray:
    rolled = np.roll(canvas, tuple(-int(o) for o in offset), axis=tuple(range(canvas.ndim)))
    return rolled[tuple(slice(0, s) for s in shape)]


def synth_generate(spec: SynthSpec) -> Dataset:
    """Deterministic labelled dataset, ``per_class`` samples of each class in class order."""
    rng = np.random.default_rng(spec.seed)
    canvases = [class_pattern(spec, k) for k in range(spec.classes)]
    n = spec.classes * spec.per_class
    log_r = np.zeros((n, 1, *spec.shape))
    theta = np.zeros((n, 1, *spec.shape))
    labels = np.repeat(np.arange(spec.classes), spec.per_class)
    d = len(spec.shape)
    for i, k in enumerate(labels):
        offset = rng.integers(0, spec.canvas, size=d) if spec.random_offset else np.zeros(d, dtype=int)
        rotation = rng.uniform(-math.pi, math.pi) if spec.global_rotation else 0.0
        noise = rng.normal(0.0, spec.sigma, size=spec.shape) if spec.sigma > 0 else 0.0
        pattern = _crop(canvases[k], offset, spec.shape)
        if spec.mode == "magnitude":
            theta[i, 0] = rotation
            log_r[i, 0] = pattern + noise
        else:
            theta[i, 0] = spec.depth * pattern + rotation + noise
            if spec.mode == "mixed":
                log_r[i, 0] = pattern
    return Dataset(ComplexField(log_r, wrap_angle(theta)), labels, spec.classes)


def split(dataset: Dataset, train_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded random (unstratified) train/test split."""
    if len(dataset) == 0:
        raise InvalidInputError("empty dataset")
    if not 0.0 < train_fraction < 1.0:
        raise InvalidInputError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    n_train = int(round(train_fraction * len(dataset)))
    return dataset.subset(perm[:n_train]), dataset.subset(perm[n_train:])


def apply_global_scaling(dataset: Dataset, g: GroupElement) -> Dataset:
    """Act with the same group element on every point of every sample."""
    return Dataset(act(g, dataset.x), dataset.labels, dataset.classes)


def make_imbalanced(dataset: Dataset, ratios: Sequence[float], seed: int = 0) -> Dataset:
    """Keep ``round(ratio_k * count_k)`` randomly chosen samples of each class ``k``."""
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.shape != (dataset.classes,):
        raise InvalidInputError(f"need one ratio per class ({dataset.classes})")
    if ((ratios <= 0) | (ratios > 1)).any():
        raise InvalidInputError("ratios must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    keep = []
    for k in range(dataset.classes):
        members = np.flatnonzero(dataset.labels == k)
        n = int(round(ratios[k] * len(members)))
        if len(members) and n == 0:
            raise InvalidInputError(f"ratio {ratios[k]} leaves no samples of class {k}")
        keep.append(rng.choice(members, size=n, replace=False))
    return dataset.subset(np.sort(np.concatenate(keep)))
