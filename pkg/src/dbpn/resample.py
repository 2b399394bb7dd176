"""Separable bicubic resampling and Gaussian blur with clamp-to-edge borders.

Images are numpy arrays shaped (H, W) or (H, W, C). Each 1-D pass is a
dense (out, in) weight matrix, so a resize is two small matmuls.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

BICUBIC_A = -0.5


def bicubic_kernel(x, a: float = BICUBIC_A):
    """Keys cubic convolution kernel, support [-2, 2]."""
    ax = np.abs(np.asarray(x, dtype=np.float64))
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0
    far = a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a
    out = np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))
    return out if out.ndim else float(out)


def _out_size(size: int, scale: Fraction, exact: bool) -> int:
    if scale >= 1:
        return math.ceil(size * scale)
    target = size * scale
    if target.denominator != 1:
        if exact:
            raise ValueError(f"cannot downscale {size} pixels by {scale} exactly")
        return max(1, math.ceil(target))
    return int(target)


@lru_cache(maxsize=256)
def resize_matrix(in_size: int, out_size: int, scale: Fraction, antialias: bool = True, a: float = BICUBIC_A):
    """(out_size, in_size) bicubic weights; pixel centres map as (i + 0.5) / scale - 0.5."""
    s = float(scale)
    stretch = 1.0 / s if (antialias and s < 1.0) else 1.0
    centre = (np.arange(out_size) + 0.5) / s - 0.5
    left = np.floor(centre - 2.0 * stretch).astype(np.int64)
    taps = int(math.ceil(4.0 * stretch)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    w = bicubic_kernel((centre[:, None] - idx) / stretch, a)
    w = w / w.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, in_size - 1)
    m = np.zeros((out_size, in_size))
    np.add.at(m, (np.repeat(np.arange(out_size), taps), idx.ravel()), w.ravel())
    m.setflags(write=False)
    return m


def _as_fraction(scale) -> Fraction:
    if isinstance(scale, Fraction):
        return scale
    if isinstance(scale, float):
        return Fraction(scale).limit_denominator(10000)
    return Fraction(scale)


def apply_separable(img: np.ndarray, mh: np.ndarray, mw: np.ndarray, h_axis: int = 0, w_axis: int = 1) -> np.ndarray:
    out = np.moveaxis(np.tensordot(mh, img, axes=([1], [h_axis])), 0, h_axis)
    out = np.moveaxis(np.tensordot(mw, out, axes=([1], [w_axis])), 0, w_axis)
    return out


def resize_bicubic(img: np.ndarray, scale, antialias: bool = True, exact: bool = True) -> np.ndarray:
    """Resize an (H, W[, C]) image by ``scale``.

    Upscaling produces ceil(dim * scale) pixels. Downscaling by 1/s requires
    divisible dims when ``exact`` is set, and otherwise rounds up.
    """
    sc = _as_fraction(scale)
    if sc <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if sc == 1:
        return img.copy()
    oh, ow = _out_size(h, sc, exact), _out_size(w, sc, exact)
    return apply_separable(img, resize_matrix(h, oh, sc, antialias), resize_matrix(w, ow, sc, antialias))


def upscale(img: np.ndarray, s: int) -> np.ndarray:
    return resize_bicubic(img, s)


def downscale(img: np.ndarray, s: int, antialias: bool = True) -> np.ndarray:
    return resize_bicubic(img, Fraction(1, s), antialias=antialias, exact=True)


def upscale_matrices(h: int, w: int, s: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column bicubic matrices taking an h x w plane to s*h x s*w."""
    sc = Fraction(s)
    return resize_matrix(h, h * s, sc, True), resize_matrix(w, w * s, sc, True)


def upscale_nchw(x: np.ndarray, s: int) -> np.ndarray:
    """Bicubic upscale of the two trailing axes of an (n, c, h, w) batch."""
    mh, mw = upscale_matrices(*x.shape[-2:], s)
    return np.ascontiguousarray(apply_separable(x, mh, mw, h_axis=2, w_axis=3))


def gaussian_taps(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian of radius ceil(3 * sigma)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = int(math.ceil(3.0 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


@lru_cache(maxsize=128)
def blur_matrix(size: int, sigma: float) -> np.ndarray:
    k = gaussian_taps(sigma)
    r = (k.size - 1) // 2
    idx = np.clip(np.arange(size)[:, None] + np.arange(-r, r + 1)[None, :], 0, size - 1)
    m = np.zeros((size, size))
    np.add.at(m, (np.repeat(np.arange(size), k.size), idx.ravel()), np.tile(k, size))
    m.setflags(write=False)
    return m


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    return apply_separable(img, blur_matrix(h, float(sigma)), blur_matrix(w, float(sigma)))
