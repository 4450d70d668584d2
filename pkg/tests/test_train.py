import math

import numpy as np
import pytest

from conftest import rand_field
from surreal import check
from surreal.data import Dataset, SynthSpec, split, synth_generate
from surreal.manifold import InvalidInputError
from surreal.network import BaselineMLP, BaselineSpec, ComplexNet, ModelSpec
from surreal.train import (
    AdamState,
    TrainConfig,
    adam_step,
    dataset_loss,
    evaluate,
    loss_ce,
    minibatches,
    recall_per_class,
    train_loop,
)

SMALL = """
input = 1 8 8
classes = 2
layer = conv out=3 kernel=2,2 stride=2,2
layer = conv out=4 kernel=2,2 stride=2,2
layer = distance_fc out=3
"""


def tiny_dataset(rng, n=8, classes=2):
    return Dataset(rand_field(rng, (n, 1, 8, 8)), np.arange(n) % classes, classes)


def test_loss_ce():
    assert loss_ce([0.25, 0.75], 1) == pytest.approx(-math.log(0.75))
    p = np.array([[0.5, 0.5], [0.9, 0.1]])
    assert loss_ce(p, [0, 0]) == pytest.approx(-(math.log(0.5) + math.log(0.9)) / 2)
    assert math.isfinite(loss_ce([1.0, 0.0], 1))
    with pytest.raises(InvalidInputError):
        loss_ce([0.5, 0.5], 2)


def test_adam_matches_reference_update():
    cfg = TrainConfig(learning_rate=0.1)
    p = np.array([1.0, -2.0])
    g = np.array([0.5, -3.0])
    state = AdamState.for_params([p])
    adam_step([p], [g], state, cfg)
    # first bias-corrected step moves every coordinate by lr * sign(g)
    np.testing.assert_allclose(p, [0.9, -1.9], rtol=1e-6)
    m = 0.1 * g
    v = 0.001 * g * g
    g2 = np.array([1.0, 1.0])
    m = 0.9 * m + 0.1 * g2
    v = 0.999 * v + 0.001 * g2 * g2
    expected = p - 0.1 * (m / (1 - 0.9**2)) / (np.sqrt(v / (1 - 0.999**2)) + 1e-8)
    adam_step([p], [g2], state, cfg)
    np.testing.assert_allclose(p, expected)
    assert state.t == 2


def test_adam_minimises_quadratic():
    cfg = TrainConfig(learning_rate=0.05)
    p = np.array([3.0, -4.0])
    state = AdamState()
    for _ in range(2000):
        adam_step([p], [2 * p], state, cfg)
    assert np.abs(p).max() < 1e-3


def test_train_config_validation():
    with pytest.raises(InvalidInputError):
        TrainConfig(learning_rate=-1.0)
    with pytest.raises(InvalidInputError):
        TrainConfig(batch_size=0)


def test_minibatches_cover_everything():
    batches = list(minibatches(10, 3, np.random.default_rng(0)))
    assert [len(b) for b in batches] == [3, 3, 3, 1]
    assert sorted(np.concatenate(batches)) == list(range(10))


def test_evaluate_confusion(rng):
    class Fixed:
        def predict(self, x):
            return np.array([0, 1, 1, 2])

    ds = Dataset(rand_field(rng, (4, 1, 2)), np.array([0, 1, 0, 2]), 4)
    acc, conf = evaluate(Fixed(), ds)
    assert acc == 0.75
    np.testing.assert_allclose(conf[0], [50, 50, 0, 0])
    np.testing.assert_allclose(conf.sum(axis=1), [100, 100, 100, 0])  # class 3 absent
    np.testing.assert_allclose(recall_per_class(conf), [0.5, 1.0, 1.0, 0.0])


def test_zero_learning_rate_keeps_model(rng):
    ds = tiny_dataset(rng)
    model = ComplexNet(ModelSpec.from_config(SMALL), seed=0)
    before = model.get_flat()
    _, metrics = train_loop(model, ds, TrainConfig(learning_rate=0.0, epochs=3, batch_size=4))
    np.testing.assert_array_equal(model.get_flat(), before)
    assert metrics[-1]["test_acc"] == metrics[0]["test_acc"]
    assert [m["epoch"] for m in metrics] == [0, 1, 2, 3]
    assert set(metrics[0]) == {"epoch", "train_loss", "test_acc"}


def test_training_is_deterministic(rng):
    ds = tiny_dataset(rng)
    cfg = TrainConfig(learning_rate=0.05, epochs=3, batch_size=3, seed=5)
    runs = [train_loop(ComplexNet(ModelSpec.from_config(SMALL), seed=0), ds, cfg) for _ in range(2)]
    assert runs[0][1] == runs[1][1]
    np.testing.assert_array_equal(runs[0][0].get_flat(), runs[1][0].get_flat())


def test_complex_model_memorises_tiny_set(rng):
    ds = tiny_dataset(rng)
    model = ComplexNet(ModelSpec.from_config(SMALL), seed=0)
    before = dataset_loss(model, ds)
    train_loop(model, ds, TrainConfig(learning_rate=0.05, epochs=150, batch_size=8))
    assert dataset_loss(model, ds) < before
    assert evaluate(model, ds)[0] == 1.0


def test_baseline_learns_aligned_magnitude_data():
    spec = SynthSpec(mode="magnitude", shape=(8, 8), per_class=40, random_offset=False, global_rotation=False)
    train, test = split(synth_generate(spec), 0.5, 0)
    model = BaselineMLP(BaselineSpec((1, 8, 8), (16,), 4), seed=0)
    _, metrics = train_loop(model, train, TrainConfig(learning_rate=0.01, epochs=40, batch_size=20), test)
    assert metrics[-1]["test_acc"] >= 0.9


def test_gradients_match_finite_differences():
    result = check.gradcheck(trials=14, seed=3)
    assert result.passed, result.line()
    assert result.checked > 500


def test_training_rejects_empty_set(rng):
    ds = tiny_dataset(rng).subset([])
    with pytest.raises(InvalidInputError):
        train_loop(ComplexNet(ModelSpec.from_config(SMALL)), ds, TrainConfig())


def test_loss_ce_examples():
    assert loss_ce([0.0, 1.0, 0.0], 1) == 0.0
    assert loss_ce(np.full(10, 0.1), 3) == pytest.approx(math.log(10), abs=1e-6)
    assert loss_ce([0.3, 0.7], 1) < loss_ce([0.6, 0.4], 1)


def test_no_learning_signal_gives_zero_gradients(rng):
    model = ComplexNet(ModelSpec.from_config(SMALL), seed=0)
    model.stages[-1].b[:] = [1000.0, 0.0]
    x = rand_field(rng, (3, 1, 8, 8))
    probs, cache = model.forward(x)
    assert (probs[:, 0] == 1.0).all()
    assert all(not g.any() for g in model.backward(cache, np.zeros(3, dtype=int)))


def test_gradcheck_with_duplicate_window_points(rng):
    from surreal.layers import WFMConv
    from surreal.manifold import ComplexField

    layer = WFMConv(1, 2, 4, 4, logits=rng.normal(size=(2, 4)))
    lr = np.array([[[0.3, 0.3, -1.0, 0.3]]])
    th = np.array([[[1.0, 1.0, 2.5, 1.0]]])
    x = ComplexField(lr, th)
    out, cache = layer.forward(x)
    g_r, g_t = rng.normal(size=(2, *out.shape))

    def loss():
        y = layer.forward(ComplexField(lr, th))[0]
        return float((g_r * y.log_r).sum() + (g_t * y.theta).sum())

    (gx_r, gx_t), (g_logits,) = layer.backward(cache, (g_r, g_t))
    err, n = check.fd_compare(loss, [layer.logits, lr, th], [g_logits, gx_r, gx_t])
    assert n == 16 and err < 1e-4


def test_adam_zero_gradient_and_convexity():
    p = np.array([0.3, -0.2, 0.1])
    before = p.copy()
    state = AdamState()
    adam_step([p], [np.zeros(3)], state, TrainConfig())
    np.testing.assert_array_equal(p, before)
    for _ in range(50):
        adam_step([p], [np.array([1.0, -3.0, 0.5])], state, TrainConfig(learning_rate=0.5))
    from surreal.wfm import ConvexWeights

    w = ConvexWeights(p).weights
    assert (w > 0).all() and abs(w.sum() - 1.0) < 1e-15


def test_separable_two_class_phase_data():
    spec = SynthSpec(classes=2, shape=(16, 16), per_class=60, canvas=64, bandwidth=0.1)
    train, test = split(synth_generate(spec), 0.5, 0)
    model_spec = ModelSpec.from_config(
        "input = 1 16 16\nclasses = 2\nlayer = conv out=4 kernel=2,2 stride=2,2\n"
        "layer = conv out=8 kernel=2,2 stride=2,2\nlayer = distance_fc out=2\n"
    )
    _, metrics = train_loop(ComplexNet(model_spec, seed=0), train, TrainConfig(learning_rate=0.05, epochs=50, batch_size=20), test)
    assert metrics[-1]["test_acc"] >= 0.95


def test_single_repeated_sample_loss_decreases(rng):
    x = rand_field(rng, (1, 1, 8, 8))
    ds = Dataset(x, np.array([1]), 2)
    _, metrics = train_loop(ComplexNet(ModelSpec.from_config(SMALL), seed=0), ds,
                            TrainConfig(learning_rate=0.01, epochs=60, batch_size=1))
    losses = [m["train_loss"] for m in metrics[11:]]
    steps = np.diff(losses)
    assert np.mean(steps <= 0) >= 0.9


def test_perfect_and_constant_predictors(rng):
    ds = Dataset(rand_field(rng, (6, 1, 2)), np.array([0, 1, 2, 0, 1, 1]), 3)

    class Oracle:
        def predict(self, x):
            return ds.labels

    class Always1:
        def predict(self, x):
            return np.ones(len(ds), dtype=int)

    acc, conf = evaluate(Oracle(), ds)
    assert acc == 1.0 and np.array_equal(conf, 100 * np.eye(3))
    acc, conf = evaluate(Always1(), ds)
    assert acc == pytest.approx(0.5)
    np.testing.assert_array_equal(conf[:, 1], 100.0)
    assert abs(conf.sum(axis=1) - 100).max() < 1e-9
