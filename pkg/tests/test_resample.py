from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from dbpn import resample


@pytest.mark.parametrize("n_in,n_out", [(8, 16), (8, 32), (8, 64), (16, 8), (16, 4), (16, 2), (5, 5)])
def test_rows_are_partition_of_unity(n_in, n_out):
    m = resample.resize_matrix(n_in, n_out, Fraction(n_out, n_in))
    np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-12)


def test_kernel_values():
    k = resample.bicubic_kernel(np.array([0.0, 0.5, 1.0, 1.5, 2.0, 2.5]))
    np.testing.assert_allclose(k, [1.0, 0.5625, 0.0, -0.0625, 0.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("s", [2, 4, 8])
def test_constant_image_preserved(s):
    img = np.full((16, 8), 0.3)
    np.testing.assert_allclose(resample.upscale(img, s), 0.3, atol=1e-12)
    np.testing.assert_allclose(resample.downscale(img, s), 0.3, atol=1e-12)
    np.testing.assert_allclose(resample.gaussian_blur(img, s / 2), 0.3, atol=1e-12)


def test_identity_scale(rng):
    img = rng.random((7, 9, 3))
    np.testing.assert_allclose(resample.resize_bicubic(img, 1), img, atol=1e-12)


def test_shapes_and_inexact_downscale(rng):
    assert resample.upscale(rng.random((3, 5, 3)), 4).shape == (12, 20, 3)
    with pytest.raises(ValueError):
        resample.downscale(rng.random((10, 8)), 4)


@pytest.mark.parametrize("s", [2, 4])
def test_matches_pillow_float_bicubic_in_interior(s, rng):
    x = rng.random((24, 24)).astype(np.float32)
    pil = lambda size: np.asarray(Image.fromarray(x, "F").resize(size, Image.BICUBIC))  # noqa: E731
    up = resample.upscale(x.astype(np.float64), s)
    b = 2 * s
    np.testing.assert_allclose(up[b:-b, b:-b], pil((24 * s, 24 * s))[b:-b, b:-b], atol=1e-6)
    down = resample.downscale(x.astype(np.float64), s)
    np.testing.assert_allclose(down[3:-3, 3:-3], pil((24 // s, 24 // s))[3:-3, 3:-3], atol=1e-6)


def test_blur_matches_direct_convolution_in_interior(rng):
    img = rng.random((30, 30))
    sigma = 1.3
    k = resample.gaussian_taps(sigma)
    r = k.size // 2
    direct = np.zeros((30 - 2 * r, 30 - 2 * r))
    kk = np.outer(k, k)
    for i in range(direct.shape[0]):
        for j in range(direct.shape[1]):
            direct[i, j] = (img[i : i + k.size, j : j + k.size] * kk).sum()
    np.testing.assert_allclose(resample.gaussian_blur(img, sigma)[r:-r, r:-r], direct, atol=1e-12)


def test_gaussian_taps_radius():
    assert resample.gaussian_taps(1.0).size == 7
    assert resample.gaussian_taps(0.25).size == 3
    with pytest.raises(ValueError):
        resample.gaussian_taps(0)


@settings(max_examples=25, deadline=None)
@given(h=st.integers(1, 12), w=st.integers(1, 12), s=st.sampled_from([2, 4, 8]), seed=st.integers(0, 10_000))
def test_upscale_is_linear_and_bounded(h, w, s, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((h, w)), rng.random((h, w))
    ua, ub = resample.upscale(a, s), resample.upscale(b, s)
    np.testing.assert_allclose(resample.upscale(2 * a - b, s), 2 * ua - ub, atol=1e-12)
    # Keys overshoot is bounded: each output is within the kernel's negative-lobe mass of [0, 1]
    assert ua.min() > -0.2 and ua.max() < 1.2
