import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from dbpn.imaging import (
    AugmentDraw,
    ImagePlane,
    augment,
    crop_to_multiple,
    degrade,
    draw_augment,
    load_image,
    rgb_to_y,
    save_image,
    to_uint8,
)


def test_png_round_trip_is_exact(tmp_path, rng):
    px = rng.integers(0, 256, (9, 7, 3)) / 255.0
    save_image(ImagePlane(px), tmp_path / "a.png")
    back = load_image(tmp_path / "a.png")
    assert back.colorspace == "RGB"
    np.testing.assert_array_equal(to_uint8(back), to_uint8(px))


def test_pgm_and_ppm(tmp_path, rng):
    y = ImagePlane(rng.integers(0, 256, (5, 6)) / 255.0)
    save_image(y, tmp_path / "g.pgm")
    assert load_image(tmp_path / "g.pgm").colorspace == "Y"
    save_image(y, tmp_path / "g.ppm")
    rgb = load_image(tmp_path / "g.ppm")
    assert rgb.channels == 3
    np.testing.assert_array_equal(to_uint8(rgb)[:, :, 1], to_uint8(y))


def test_sixteen_bit_rejected_with_path(tmp_path):
    p = tmp_path / "deep.png"
    Image.fromarray(np.full((4, 4), 40000, dtype=np.uint16)).save(p)
    with pytest.raises(OSError, match="deep.png"):
        load_image(p)


def test_unknown_suffix_rejected(tmp_path):
    with pytest.raises(OSError):
        save_image(ImagePlane(np.zeros((2, 2))), tmp_path / "x.jpg")


def test_luma_of_white_and_black():
    assert rgb_to_y(np.ones((1, 1, 3))).pixels[0, 0] == pytest.approx(235 / 255)
    assert rgb_to_y(np.zeros((1, 1, 3))).pixels[0, 0] == pytest.approx(16 / 255)


def test_plane_validation():
    assert ImagePlane(np.full((2, 2), 2.0)).pixels.max() == 1.0
    with pytest.raises(ValueError):
        ImagePlane(np.zeros((2, 2, 4)))


def test_degrade_crops_odd_sizes(rng):
    hr = ImagePlane(rng.random((37, 42, 3)))
    lr = degrade(hr, 8)
    assert (lr.height, lr.width) == (4, 5)
    assert crop_to_multiple(hr, 8).pixels.shape == (32, 40, 3)


def test_crop_offset_alignment():
    lr = np.arange(36.0).reshape(6, 6)
    hr = np.kron(lr, np.ones((2, 2)))
    l, h = augment(lr, hr, 2, 3, AugmentDraw(top=2, left=1))
    np.testing.assert_array_equal(h, np.kron(l, np.ones((2, 2))))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), s=st.sampled_from([2, 4]))
def test_augment_keeps_pairs_aligned(seed, s):
    rng = np.random.default_rng(seed)
    lr = rng.random((7, 9))
    hr = np.kron(lr, np.ones((s, s)))
    draw = draw_augment(lr.shape, 4, rng)
    l, h = augment(lr, hr, s, 4, draw)
    assert l.shape == (4, 4) and h.shape == (4 * s, 4 * s)
    np.testing.assert_array_equal(h, np.kron(l, np.ones((s, s))))


def test_augment_is_an_isometry_of_values(rng):
    lr = rng.random((5, 5))
    l, _ = augment(lr, np.kron(lr, np.ones((2, 2))), 2, None, AugmentDraw(rot90=1, hflip=True))
    np.testing.assert_array_equal(np.sort(l.ravel()), np.sort(lr.ravel()))
