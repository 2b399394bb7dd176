import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dbpn.metrics import EvalProtocol, format_db, psnr, ssim


def test_identical_images():
    a = np.random.default_rng(0).random((32, 32))
    assert psnr(a, a) == math.inf
    assert format_db(psnr(a, a)) == "inf"
    assert ssim(a, a) == 1.0


def test_uniform_offset_psnr():
    a = np.full((20, 20), 0.5)
    assert psnr(a, a + 1 / 255) == pytest.approx(48.13, abs=0.01)


def test_negated_structure_has_low_ssim():
    a = np.random.default_rng(1).random((32, 32))
    assert ssim(a, 1 - a) < 0.5


def test_crop_changes_result_on_noisy_border():
    rng = np.random.default_rng(2)
    a = rng.random((24, 24))
    b = a.copy()
    b[:2] += 0.3
    assert psnr(a, b, EvalProtocol(scale=2, crop=0)) < psnr(a, b, EvalProtocol(scale=2)) == math.inf


def test_y_protocol_on_rgb():
    rng = np.random.default_rng(3)
    a = rng.random((20, 20, 3))
    b = a.copy()
    b[..., 2] += 0.01  # blue moves luma only a little
    y = psnr(a, b, EvalProtocol(scale=2))
    full = psnr(a, b, EvalProtocol(scale=2, y_only=False))
    assert y > full


def test_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


def test_ssim_agrees_with_scikit_image():
    metrics = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(4)
    a = rng.random((40, 36))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    ref = metrics.structural_similarity(
        a, b, data_range=1.0, gaussian_weights=True, sigma=1.5, use_sample_covariance=False
    )
    assert ssim(a, b) == pytest.approx(ref, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), noise=st.floats(0.01, 0.3))
def test_metric_symmetry_and_ranges(seed, noise):
    rng = np.random.default_rng(seed)
    a = rng.random((16, 16))
    b = np.clip(a + noise * rng.standard_normal(a.shape), 0, 1)
    assert psnr(a, b) == pytest.approx(psnr(b, a))
    assert ssim(a, b) == pytest.approx(ssim(b, a))
    assert -1.0 <= ssim(a, b) <= 1.0
