"""PSNR and SSIM under the usual SR evaluation protocol (Y channel, border crop)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imaging import rgb_to_y


@dataclass
class EvalProtocol:
    scale: int = 4
    crop: int | None = None  # None means crop `scale` pixels
    y_only: bool = True
    peak: float = 1.0

    @property
    def border(self) -> int:
        return self.scale if self.crop is None else self.crop


def _prepare(a, b, proto: EvalProtocol) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(getattr(a, "pixels", a), dtype=np.float64)
    b = np.asarray(getattr(b, "pixels", b), dtype=np.float64)
    if proto.y_only:
        a = rgb_to_y(a).pixels if a.ndim == 3 else a
        b = rgb_to_y(b).pixels if b.ndim == 3 else b
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")
    c = proto.border
    if c > 0:
        if 2 * c >= min(a.shape[:2]):
            raise ValueError(f"crop {c} too large for {a.shape[0]}x{a.shape[1]} image")
        a, b = a[c:-c, c:-c], b[c:-c, c:-c]
    return a, b


def psnr(a, b, proto: EvalProtocol | None = None) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give ``math.inf``."""
    proto = proto or EvalProtocol(crop=0, y_only=False)
    a, b = _prepare(a, b, proto)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(proto.peak**2 / mse)


def format_db(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.2f}"


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _filter_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    n = k.size
    h, w = img.shape
    rows = sum(k[i] * img[i : h - n + 1 + i] for i in range(n))
    return sum(k[j] * rows[:, j : w - n + 1 + j] for j in range(n))


def _ssim_plane(a: np.ndarray, b: np.ndarray, peak: float) -> float:
    k = _gaussian_window()
    if min(a.shape) < k.size:
        raise ValueError(f"image {a.shape} smaller than the 11x11 SSIM window")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_a, mu_b = _filter_valid(a, k), _filter_valid(b, k)
    saa = _filter_valid(a * a, k) - mu_a * mu_a
    sbb = _filter_valid(b * b, k) - mu_b * mu_b
    sab = _filter_valid(a * b, k) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


def ssim(a, b, proto: EvalProtocol | None = None) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03.

    Colour inputs without ``y_only`` are averaged over channels.
    """
    proto = proto or EvalProtocol(crop=0, y_only=False)
    a, b = _prepare(a, b, proto)
    if np.array_equal(a, b):
        return 1.0
    if a.ndim == 2:
        return _ssim_plane(a, b, proto.peak)
    return float(np.mean([_ssim_plane(a[..., i], b[..., i], proto.peak) for i in range(a.shape[2])]))
