"""Loss, optimiser, training loop and evaluation.

Works for any model exposing ``params``, ``forward`` (returning class
probabilities and a cache), ``backward`` and ``predict``: both
:class:`~surreal.network.ComplexNet` and the real-valued baseline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .manifold import InvalidInputError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.005
    batch_size: int = 100
    epochs: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InvalidInputError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise InvalidInputError("batch_size must be >= 1 and epochs >= 0")


def loss_ce(probabilities, label) -> float:
    """``-log p[label]`` for one probability vector; mean over rows for a batch."""
    p = np.asarray(probabilities, dtype=np.float64)
    label = np.asarray(label)
    c = p.shape[-1]
    if (label < 0).any() or (label >= c).any():
        raise InvalidInputError(f"label out of range [0, {c})")
    picked = p[label] if p.ndim == 1 else p[np.arange(len(p)), label]
    return float(np.mean(-np.log(np.maximum(picked, np.finfo(float).tiny))))


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state: AdamState, config: TrainConfig):
    """One bias-corrected ADAM update, applied to ``params`` in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(grads) != len(params):
        raise InvalidInputError("one gradient per parameter required")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.eps)
    return params, state


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def evaluate(model, dataset: Dataset):
    """Accuracy and the row-normalised confusion matrix in percent.

    Rows are true classes, columns predictions.  Rows of classes absent from
    ``dataset`` are left at zero.
    """
    if len(dataset) == 0:
        raise InvalidInputError("empty dataset")
    pred = model.predict(dataset.x)
    c = dataset.classes
    counts = np.zeros((c, c))
    np.add.at(counts, (dataset.labels, pred), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    confusion = np.divide(100.0 * counts, totals, out=np.zeros_like(counts), where=totals > 0)
    return float(np.mean(pred == dataset.labels)), confusion


def recall_per_class(confusion: np.ndarray) -> np.ndarray:
    return np.diag(confusion) / 100.0


def dataset_loss(model, dataset: Dataset) -> float:
    probs, _ = model.forward(dataset.x)
    return loss_ce(probs, dataset.labels)


def train_loop(model, train: Dataset, config: TrainConfig, test: Dataset | None = None):
    """Minibatch ADAM on mean cross-entropy.

    Returns ``(model, metrics)`` where ``metrics`` holds one dict per epoch
    with keys ``epoch``, ``train_loss`` and ``test_acc``; epoch 0 is the
    untrained model.  ``train_loss`` is the mean minibatch loss of the epoch.
    """
    if len(train) == 0:
        raise InvalidInputError("empty training set")
    rng = np.random.default_rng(config.seed)
    state = AdamState.for_params(model.params)
    test = train if test is None or len(test) == 0 else test

    metrics = [{"epoch": 0, "train_loss": dataset_loss(model, train), "test_acc": evaluate(model, test)[0]}]
    for epoch in range(1, config.epochs + 1):
        losses, sizes = [], []
        for batch in minibatches(len(train), config.batch_size, rng):
            sub = train.subset(batch)
            probs, cache = model.forward(sub.x)
            losses.append(loss_ce(probs, sub.labels))
            sizes.append(len(batch))
            if config.learning_rate > 0:
                adam_step(model.params, model.backward(cache, sub.labels), state, config)
        row = {
            "epoch": epoch,
            "train_loss": float(np.average(losses, weights=sizes)),
            "test_acc": evaluate(model, test)[0],
        }
        metrics.append(row)
        log.info("epoch %d loss %.4f acc %.4f", epoch, row["train_loss"], row["test_acc"])
    return model, metrics
