import math

import numpy as np
import pytest

from surreal.manifold import ComplexField, InvalidInputError
from surreal.viz import gray_image, hsv_image, read_ppm, write_ppm


def test_constant_phase_gives_constant_hue():
    f = ComplexField(np.linspace(-1, 1, 12).reshape(3, 4), np.full((3, 4), 1.0))
    img = hsv_image(f).astype(float)
    # same hue: every pixel is a scalar multiple of the brightest one
    ref = img.reshape(-1, 3)[np.argmax(img.sum(axis=-1))]
    for px in img.reshape(-1, 3):
        scale = px.max() / ref.max()
        assert np.abs(px - scale * ref).max() <= 1.5


def test_unit_modulus_gives_full_value():
    theta = np.linspace(-math.pi + 0.1, math.pi, 16).reshape(4, 4)
    img = hsv_image(ComplexField(np.zeros((4, 4)), theta))
    assert (img.max(axis=-1) == 255).all()
    assert len({tuple(p) for p in img.reshape(-1, 3)}) > 8


def test_hue_mapping():
    img = hsv_image(ComplexField(np.zeros(3), np.array([-math.pi / 3, math.pi / 3, math.pi])))
    np.testing.assert_array_equal(img[0, 0], [0, 255, 0])  # hue 1/3 is green
    np.testing.assert_array_equal(img[0, 1], [0, 0, 255])  # hue 2/3 is blue
    np.testing.assert_array_equal(img[0, 2], [255, 0, 0])  # theta = pi -> hue 1 == red


def test_ppm_round_trip(tmp_path):
    rgb = np.random.default_rng(0).integers(0, 256, (5, 7, 3), dtype=np.uint8)
    path = write_ppm(tmp_path / "x.ppm", rgb)
    assert path.read_bytes().startswith(b"P6\n7 5\n255\n")
    np.testing.assert_array_equal(read_ppm(path), rgb)
    with pytest.raises(InvalidInputError):
        write_ppm(tmp_path / "bad.ppm", np.zeros((2, 2)))


def test_gray_image_normalises():
    img = gray_image(np.array([[0.0, 2.0], [-4.0, 1.0]]))
    assert img[1, 0, 0] == 255 and img[0, 0, 0] == 0 and (img[..., 0] == img[..., 2]).all()
    assert gray_image(np.zeros((2, 2))).max() == 0
