import numpy as np
import pytest

from conftest import rand_field
from surreal.manifold import ComplexField, GroupElement, InvalidInputError, act
from surreal.network import (
    BaselineMLP,
    BaselineSpec,
    ComplexNet,
    ConfigError,
    ConvLayer,
    DistanceFCLayer,
    ModelSpec,
    TReLULayer,
    cartesian_features,
    param_count,
    parse_config,
    parse_ints,
)

CFG = """
# two convs, tReLU between
input = 1 16 16
classes = 3
layer = conv out=4 kernel=2,2 stride=2,2
layer = trelu
layer = conv out=6 kernel=2x2        # stride defaults to the kernel
layer = distance_fc out=5
head_hidden = 7
"""


def test_parse_and_round_trip():
    spec = ModelSpec.from_config(CFG)
    assert spec.input_shape == (1, 16, 16) and spec.classes == 3
    assert spec.layers == (ConvLayer(4, (2, 2), (2, 2)), TReLULayer(), ConvLayer(6, (2, 2), (2, 2)), DistanceFCLayer(5))
    assert spec.head_hidden == (7,)
    assert ModelSpec.from_config(spec.to_config()) == spec
    assert spec.shapes() == [(1, 16, 16), (4, 8, 8), (4, 8, 8), (6, 4, 4), (5, 6)]


@pytest.mark.parametrize(
    "text,needle",
    [
        ("input = 1 8\nclasses = 2\nlayer = conv out=2 kernel=2", "distance_fc"),
        ("input = 1 8\nclasses = 2\nlayer = distance_fc out=2\nlayer = conv out=2 kernel=2", "last"),
        ("input = 1 8\nclasses = 2\nclasses = 3\nlayer = distance_fc out=2", "duplicate"),
        ("input = 1 8\nclasses = 2\nlayer = pool out=2\nlayer = distance_fc out=2", "unknown layer"),
        ("input = 1 8\nclasses = 2\nlayer = conv out=2\nlayer = distance_fc out=2", "kernel"),
        ("classes = 2\nlayer = distance_fc out=2", "input"),
        ("input = 1 4\nclasses = 2\nlayer = conv out=2 kernel=5\nlayer = distance_fc out=2", "smaller"),
        ("input = 1 4 4\nclasses = 2\nlayer = conv out=2 kernel=2\nlayer = distance_fc out=2", "does not match"),
        ("this line has no equals sign", "key = value"),
    ],
)
def test_config_errors(text, needle):
    with pytest.raises(ConfigError, match=needle):
        ModelSpec.from_config(text)


def test_parse_helpers():
    assert parse_ints("3, 4x5 6") == (3, 4, 5, 6)
    assert parse_ints("") == ()
    with pytest.raises(ConfigError):
        parse_ints("a b")
    assert parse_config("a = 1 # comment\n\nlayer = x\nlayer = y") == {"a": "1", "layer": ["x", "y"]}


def test_param_count_matches_network():
    spec = ModelSpec.from_config(CFG)
    net = ComplexNet(spec, seed=0)
    # convs: 4*1*4 + 6*4*4; distance: 5*6; head: (30+1)*7 + (7+1)*3
    expected = 16 + 96 + 30 + 31 * 7 + 8 * 3
    assert param_count(spec) == param_count(net) == expected
    assert len(net.get_flat()) == expected


def test_flat_round_trip():
    net = ComplexNet(ModelSpec.from_config(CFG), seed=1)
    flat = net.get_flat()
    other = ComplexNet(ModelSpec.from_config(CFG), seed=2)
    other.set_flat(flat)
    np.testing.assert_array_equal(other.get_flat(), flat)
    with pytest.raises(InvalidInputError):
        other.set_flat(flat[:-1])


def test_forward_shapes_and_probabilities(rng):
    net = ComplexNet(ModelSpec.from_config(CFG), seed=0)
    x = rand_field(rng, (4, 1, 16, 16))
    probs, _ = net.forward(x)
    assert probs.shape == (4, 3)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)
    assert net.predict(x).shape == (4,)
    acts = net.activations(x)
    assert [a.shape for a in acts] == [(4, 4, 8, 8), (4, 4, 8, 8), (4, 6, 4, 4)]
    with pytest.raises(InvalidInputError):
        net.forward(rand_field(rng, (4, 1, 8, 8)))


def test_seeded_init_is_reproducible():
    spec = ModelSpec.from_config(CFG)
    np.testing.assert_array_equal(ComplexNet(spec, 3).get_flat(), ComplexNet(spec, 3).get_flat())
    assert not np.array_equal(ComplexNet(spec, 3).get_flat(), ComplexNet(spec, 4).get_flat())


def test_without_trelu():
    spec = ModelSpec.from_config(CFG)
    assert spec.has_trelu and not spec.without_trelu().has_trelu
    assert param_count(spec.without_trelu()) == param_count(spec)


def test_baseline(rng):
    spec = BaselineSpec((1, 4, 4), (8,), 3)
    model = BaselineMLP(spec, seed=0)
    assert param_count(model) == (32 + 1) * 8 + (8 + 1) * 3
    x = rand_field(rng, (5, 1, 4, 4))
    feats = cartesian_features(x)
    assert feats.shape == (5, 32)
    np.testing.assert_allclose(feats[:, :16] + 1j * feats[:, 16:], x.to_complex().reshape(5, -1))
    assert model.forward(x)[0].shape == (5, 3)


def test_param_count_small_cases():
    assert param_count(ModelSpec((1, 4, 4), 2)) == 0
    assert param_count(ModelSpec((1, 4, 4), 2, (ConvLayer(1, (2, 2), (2, 2)),))) == 4


def test_forward_contracts(rng):
    spec = ModelSpec.from_config(CFG).without_trelu()
    net = ComplexNet(spec, seed=0)
    const = ComplexField(np.full((2, 1, 16, 16), 0.3), np.full((2, 1, 16, 16), 1.0))
    np.testing.assert_allclose(net.forward(const)[0].sum(axis=1), 1.0)
    x = rand_field(rng, (3, 1, 16, 16))
    p = net.forward(x)[0]
    assert p.tobytes() == ComplexNet(spec, seed=0).forward(x)[0].tobytes()
    moved = net.forward(act(GroupElement(-4.0, 2.5), x))[0]
    assert np.abs(moved - p).max() < 1e-9
