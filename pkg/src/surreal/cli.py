"""Command line interface: ``surreal {train,eval,check,viz,synth}``.

A run config is one ``key = value`` file holding the model description (see
:mod:`surreal.network`), training settings and the data source::

    lr = 0.05
    epochs = 50
    seed = 0
    train_fraction = 0.5
    baseline_hidden = 64
    synth.mode = phase        # or: manifest = data/manifest.csv
    synth.per_class = 100

Every error exits with status 2 and a one-line diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import check, kernels, viz
from .data import Dataset, FormatError, SynthSpec, apply_global_scaling, load_cplx, load_field, read_manifest
from .data import save_cplx, split, synth_generate, write_dataset
from .layers import normalize_unit_modulus
from .manifold import GroupElement, InvalidInputError
from .network import BaselineMLP, BaselineSpec, ComplexNet, ConfigError, ModelSpec, param_count, parse_config
from .network import parse_ints
from .train import TrainConfig, evaluate, train_loop

MODEL_KEYS = {"input", "classes", "layer", "head_hidden"}
TRAIN_KEYS = {"lr": "learning_rate", "batch_size": "batch_size", "epochs": "epochs", "seed": "seed",
              "beta1": "beta1", "beta2": "beta2", "eps": "eps"}
SYNTH_FIELDS = {f.name: f.type for f in fields(SynthSpec)}


class CheckpointError(ValueError):
    pass


def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _synth_value(name: str, value: str):
    kind = SYNTH_FIELDS[name]
    if name == "shape":
        return parse_ints(value)
    if name == "mode":
        return value
    if "bool" in str(kind):
        return _bool(value)
    return (float if "float" in str(kind) else int)(value)


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    train: TrainConfig = TrainConfig()
    synth: SynthSpec | None = None
    manifest: Path | None = None
    train_fraction: float = 0.5
    baseline_hidden: tuple[int, ...] = (64,)
    baseline_lr: float | None = None
    normalize: bool = False

    @classmethod
    def from_text(cls, text: str, base: Path = Path(".")) -> "RunConfig":
        cfg = parse_config(text)
        model = ModelSpec.from_mapping({k: v for k, v in cfg.items() if k in MODEL_KEYS})
        train_kw, synth_kw, run_kw = {}, {}, {}
        for key, value in cfg.items():
            if key in MODEL_KEYS:
                continue
            try:
                if key in TRAIN_KEYS:
                    name = TRAIN_KEYS[key]
                    train_kw[name] = int(value) if name in ("batch_size", "epochs", "seed") else float(value)
                elif key.startswith("synth.") and key[6:] in SYNTH_FIELDS:
                    synth_kw[key[6:]] = _synth_value(key[6:], value)
                elif key == "manifest":
                    run_kw["manifest"] = Path(value) if Path(value).is_absolute() else base / value
                elif key == "train_fraction":
                    run_kw[key] = float(value)
                elif key == "baseline_lr":
                    run_kw[key] = float(value)
                elif key == "baseline_hidden":
                    run_kw[key] = parse_ints(value)
                elif key == "normalize":
                    run_kw[key] = _bool(value)
                else:
                    raise ConfigError(f"unknown config key {key!r}")
            except ValueError as e:
                if isinstance(e, ConfigError):
                    raise
                raise ConfigError(f"bad value for {key!r}: {value!r}") from None
        if "manifest" in run_kw and synth_kw:
            raise ConfigError("give either manifest or synth.* keys, not both")
        synth = None
        if "manifest" not in run_kw:
            synth_kw.setdefault("classes", model.classes)
            synth_kw.setdefault("shape", model.input_shape[1:])
            synth = SynthSpec(**synth_kw)
        elif not run_kw["manifest"].is_file():
            raise ConfigError(f"manifest not found: {run_kw['manifest']}")
        run = cls(model, TrainConfig(**train_kw), synth, **run_kw)
        run.validate()
        return run

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_text(path.read_text(), path.parent)

    def validate(self) -> None:
        if self.synth is not None:
            expected = (1, *self.synth.shape)
            if tuple(self.model.input_shape) != expected:
                raise ConfigError(f"model input {self.model.input_shape} does not match synthetic samples {expected}")
            if self.synth.classes != self.model.classes:
                raise ConfigError("synth.classes must equal classes")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")

    def to_config(self) -> str:
        t = self.train
        lines = [
            self.model.to_config().rstrip("\n"),
            f"lr = {t.learning_rate!r}",
            f"batch_size = {t.batch_size}",
            f"epochs = {t.epochs}",
            f"seed = {t.seed}",
            f"beta1 = {t.beta1!r}",
            f"beta2 = {t.beta2!r}",
            f"eps = {t.eps!r}",
            f"train_fraction = {self.train_fraction!r}",
            f"baseline_hidden = {' '.join(map(str, self.baseline_hidden))}",
            f"normalize = {self.normalize}",
        ]
        if self.baseline_lr is not None:
            lines.append(f"baseline_lr = {self.baseline_lr!r}")
        if self.manifest is not None:
            lines.append(f"manifest = {self.manifest.resolve()}")
        else:
            for f in fields(SynthSpec):
                v = getattr(self.synth, f.name)
                lines.append(f"synth.{f.name} = {' '.join(map(str, v)) if isinstance(v, tuple) else v}")
        return "\n".join(lines) + "\n"

    def load_data(self) -> Dataset:
        ds = read_manifest(self.manifest, self.model.classes) if self.manifest else synth_generate(self.synth)
        if self.normalize:
            ds = Dataset(normalize_unit_modulus(ds.x), ds.labels, ds.classes)
        if ds.sample_shape != tuple(self.model.input_shape):
            raise ConfigError(f"samples have shape {ds.sample_shape}, model expects {self.model.input_shape}")
        return ds

    def baseline_spec(self) -> BaselineSpec:
        return BaselineSpec(tuple(self.model.input_shape), tuple(self.baseline_hidden), self.model.classes)


# checkpoints ------------------------------------------------------------------


def save_checkpoint(model: ComplexNet, run: RunConfig, path) -> Path:
    """Write ``model.cfg``, ``params.cplx`` and ``run.cfg`` into a directory, atomically."""
    path = Path(path)
    tmp = Path(tempfile.mkdtemp(dir=path.parent, prefix=f".{path.name}."))
    try:
        (tmp / "model.cfg").write_text(model.spec.to_config())
        (tmp / "run.cfg").write_text(run.to_config())
        save_cplx(model.get_flat(), tmp / "params.cplx")
        if path.exists():
            shutil.rmtree(path)
        os.replace(tmp, path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return path


def load_checkpoint(path) -> tuple[ComplexNet, RunConfig | None]:
    path = Path(path)
    if not (path / "model.cfg").is_file() or not (path / "params.cplx").is_file():
        raise CheckpointError(f"not a checkpoint directory: {path}")
    spec = ModelSpec.from_config((path / "model.cfg").read_text())
    flat = load_cplx(path / "params.cplx")
    if np.iscomplexobj(flat) or flat.ndim != 1 or flat.size != param_count(spec):
        raise CheckpointError(
            f"checkpoint parameters ({flat.size}) do not match the model description ({param_count(spec)})"
        )
    model = ComplexNet(spec, seed=None)
    model.set_flat(flat)
    run = RunConfig.from_file(path / "run.cfg") if (path / "run.cfg").is_file() else None
    return model, run


# output helpers ---------------------------------------------------------------


def write_metrics(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "test_acc"])
        for r in rows:
            w.writerow([r["epoch"], repr(float(r["train_loss"])), repr(float(r["test_acc"]))])


def write_confusion(path, confusion: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred", *range(confusion.shape[1])])
        for k, row in enumerate(confusion):
            w.writerow([k, *(f"{v:.1f}" for v in row)])


def format_confusion(confusion: np.ndarray) -> str:
    c = confusion.shape[1]
    lines = ["true\\pred " + " ".join(f"{j:>6d}" for j in range(c))]
    lines += [f"{k:>9d} " + " ".join(f"{v:6.1f}" for v in row) for k, row in enumerate(confusion)]
    return "\n".join(lines)


# commands ---------------------------------------------------------------------


def cmd_train(args) -> int:
    run = RunConfig.from_file(args.config)
    overrides = {}
    if args.lr is not None:
        overrides["learning_rate"] = args.lr
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.seed is not None:
        overrides["seed"] = args.seed
    run = replace(run, train=replace(run.train, **overrides))
    if args.runs < 1:
        raise ConfigError("--runs must be at least 1")
    data = run.load_data()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    n_complex = param_count(run.model)
    n_base = param_count(BaselineMLP(run.baseline_spec(), seed=None))
    print(f"params complex={n_complex} baseline={n_base} ratio={n_complex / n_base:.4f}")

    accs, base_accs = [], []
    for i in range(args.runs):
        seed = run.train.seed + i
        cfg = replace(run.train, seed=seed)
        this_run = replace(run, train=cfg)
        train_set, test_set = split(data, run.train_fraction, seed)
        model, metrics = train_loop(ComplexNet(run.model, seed=seed), train_set, cfg, test_set)
        acc, confusion = evaluate(model, test_set if len(test_set) else train_set)
        run_dir = out / f"run_{i:03d}"
        run_dir.mkdir(exist_ok=True)
        write_metrics(run_dir / "metrics.csv", metrics)
        write_confusion(run_dir / "confusion.csv", confusion)
        save_checkpoint(model, this_run, run_dir / "checkpoint")
        accs.append(acc)
        line = f"run {i} seed={seed} test_acc={acc:.4f}"
        if args.with_baseline:
            base_cfg = replace(cfg, learning_rate=run.baseline_lr if run.baseline_lr is not None else cfg.learning_rate)
            if args.lr is not None:
                base_cfg = replace(base_cfg, learning_rate=args.lr)
            base, base_metrics = train_loop(BaselineMLP(run.baseline_spec(), seed=seed), train_set, base_cfg, test_set)
            write_metrics(run_dir / "baseline_metrics.csv", base_metrics)
            base_accs.append(base_metrics[-1]["test_acc"])
            line += f" baseline_acc={base_accs[-1]:.4f}"
        print(line)
    summary = f"mean_acc={np.mean(accs):.4f} std_acc={np.std(accs):.4f} runs={args.runs}"
    if base_accs:
        summary += f" baseline_mean_acc={np.mean(base_accs):.4f} baseline_std_acc={np.std(base_accs):.4f}"
    print(summary)
    return 0


def cmd_eval(args) -> int:
    model, run = load_checkpoint(args.checkpoint)
    if args.config:
        run = RunConfig.from_file(args.config)
    if args.manifest:
        data = read_manifest(args.manifest, model.spec.classes)
        if run is not None and run.normalize:
            data = Dataset(normalize_unit_modulus(data.x), data.labels, data.classes)
    else:
        if run is None:
            raise CheckpointError("checkpoint has no run.cfg; pass --manifest or --config")
        if run.model != model.spec:
            raise CheckpointError("config model description does not match the checkpoint")
        data = run.load_data()
        if args.split != "all":
            train_set, test_set = split(data, run.train_fraction, run.train.seed)
            data = train_set if args.split == "train" else test_set
    if data.sample_shape != tuple(model.spec.input_shape) or data.classes != model.spec.classes:
        raise CheckpointError(
            f"data (shape {data.sample_shape}, {data.classes} classes) does not match the checkpoint model"
        )
    if args.scale or args.rotate:
        data = apply_global_scaling(data, GroupElement(args.scale, args.rotate))
    acc, confusion = evaluate(model, data)
    print(f"accuracy={acc:.4f} n={len(data)}")
    print(format_confusion(confusion))
    return 0


def cmd_check(args) -> int:
    results = check.run_suites(args.suite, args.trials, args.seed)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    for r in failed:
        print(f"error: suite {r.name} failed; worst trial {r.worst_trial} with --seed {r.seed}", file=sys.stderr)
    return 1 if failed else 0


def cmd_viz(args) -> int:
    try:
        fld = load_field(args.input)
    except OSError as e:
        raise InvalidInputError(f"cannot read {args.input}: {e.strerror}") from None
    out = Path(args.out)
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
        shape = tuple(model.spec.input_shape)
        if fld.size != np.prod(shape):
            raise InvalidInputError(f"input has shape {fld.shape}, model expects {shape}")
        fld = fld.reshape(*shape)
    elif fld.log_r.ndim in (1, 2):
        fld = fld.reshape(1, *fld.shape)
    elif fld.log_r.ndim != 3:
        raise InvalidInputError(f"expected a (C, *spatial) field, got shape {fld.shape}")
    written = viz.render_field(fld, out)
    if args.layer is not None:
        if not args.checkpoint:
            raise InvalidInputError("--layer needs --checkpoint")
        written += viz.render_responses(model, fld, out, args.layer)
    for p in written:
        print(p)
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec(
        mode=args.mode,
        classes=args.classes,
        shape=parse_ints(args.shape),
        sigma=args.sigma,
        per_class=args.n,
        seed=args.seed,
        depth=args.depth,
        bandwidth=args.bandwidth,
    )
    manifest = write_dataset(synth_generate(spec), args.out)
    print(f"wrote {spec.classes * spec.per_class} samples; manifest {manifest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="surreal", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train the complex model described by a run config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default="runs")
    t.add_argument("--runs", type=int, default=1, help="repeat with seeds seed..seed+N-1")
    t.add_argument("--lr", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--with-baseline", action="store_true", help="also train the real-valued MLP baseline")
    t.add_argument("--deterministic", action="store_true", help="single-threaded kernels")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="accuracy and confusion matrix of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--manifest")
    e.add_argument("--config", help="regenerate data from this run config instead of the checkpoint's")
    e.add_argument("--split", choices=("test", "train", "all"), default="test")
    e.add_argument("--scale", type=float, default=0.0, metavar="LOGR", help="add LOGR to every log-magnitude")
    e.add_argument("--rotate", type=float, default=0.0, metavar="THETA", help="rotate every phase by THETA")
    e.add_argument("--deterministic", action="store_true")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("check", help="run the numerical property suites")
    c.add_argument("--suite", action="append", choices=sorted(check.SUITES))
    c.add_argument("--trials", type=int)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--deterministic", action="store_true")
    c.set_defaults(func=cmd_check)

    v = sub.add_parser("viz", help="HSV images of an input and optional layer responses")
    v.add_argument("--input", required=True)
    v.add_argument("--out", required=True)
    v.add_argument("--checkpoint")
    v.add_argument("--layer", type=int)
    v.add_argument("--deterministic", action="store_true")
    v.set_defaults(func=cmd_viz)

    s = sub.add_parser("synth", help="write a synthetic dataset as CPLX1 files plus manifest.csv")
    s.add_argument("--mode", choices=("phase", "magnitude", "mixed"), default="phase")
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--n", type=int, default=100, help="samples per class")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--shape", default="32,32")
    s.add_argument("--sigma", type=float, default=0.3)
    s.add_argument("--depth", type=float, default=SynthSpec.depth)
    s.add_argument("--bandwidth", type=float, default=SynthSpec.bandwidth)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth, deterministic=False)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.deterministic:
        kernels.set_threads(1)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, FormatError, InvalidInputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e.filename or ''}: {e.strerror}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
