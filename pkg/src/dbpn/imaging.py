"""Image planes, file I/O, colour conversion, degradation and augmentation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import resample

SUPPORTED_SUFFIXES = {".png", ".ppm", ".pgm", ".pnm"}


@dataclass
class ImagePlane:
    """Float image in [0, 1]; ``pixels`` is (H, W) for Y and (H, W, 3) for RGB."""

    pixels: np.ndarray
    colorspace: str = "RGB"

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 3 and px.shape[2] == 1:
            px = px[:, :, 0]
        if px.ndim == 2:
            if self.colorspace == "RGB":
                self.colorspace = "Y"
        elif not (px.ndim == 3 and px.shape[2] == 3):
            raise ValueError(f"image must be (H, W) or (H, W, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be non-empty")
        self.pixels = np.clip(px, 0.0, 1.0)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3


def load_image(path) -> ImagePlane:
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("L", "1", "LA"):
                return ImagePlane(np.asarray(im.convert("L")) / 255.0, "Y")
            if mode in ("RGB", "RGBA", "P", "CMYK", "YCbCr"):
                return ImagePlane(np.asarray(im.convert("RGB")) / 255.0, "RGB")
    except OSError as exc:
        raise OSError(f"{path}: cannot read image ({exc})") from exc
    raise OSError(f"{path}: unsupported bit depth or mode {mode!r}; only 8-bit images are supported")


def to_uint8(img: ImagePlane | np.ndarray) -> np.ndarray:
    px = img.pixels if isinstance(img, ImagePlane) else np.asarray(img)
    return np.round(np.clip(px, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img: ImagePlane, path) -> None:
    path = Path(path)
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise OSError(f"{path}: unsupported format (use PNG or PPM/PGM)")
    arr = to_uint8(img)
    if path.suffix.lower() == ".ppm" and arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


def rgb_to_y(img: ImagePlane | np.ndarray) -> ImagePlane:
    """BT.601 studio-swing luma, output in [16/255, 235/255]."""
    px = img.pixels if isinstance(img, ImagePlane) else np.asarray(img, dtype=np.float64)
    if px.ndim != 3 or px.shape[2] != 3:
        raise ValueError(f"rgb_to_y needs a 3-channel image, got shape {px.shape}")
    y = (65.481 * px[..., 0] + 128.553 * px[..., 1] + 24.966 * px[..., 2] + 16.0) / 255.0
    return ImagePlane(y, "Y")


def luminance(img: ImagePlane) -> ImagePlane:
    return img if img.channels == 1 else rgb_to_y(img)


def crop_to_multiple(img: ImagePlane, s: int) -> ImagePlane:
    h, w = img.height - img.height % s, img.width - img.width % s
    if h == 0 or w == 0:
        raise ValueError(f"image {img.height}x{img.width} is smaller than scale {s}")
    return ImagePlane(img.pixels[:h, :w], img.colorspace)


def degrade(hr: ImagePlane, s: int) -> ImagePlane:
    """Antialiased bicubic downscale by exactly 1/s, cropping HR to a multiple of s first."""
    hr = crop_to_multiple(hr, s)
    return ImagePlane(resample.downscale(hr.pixels, s), hr.colorspace)


# ---------------------------------------------------------------------------
# augmentation


@dataclass(frozen=True)
class AugmentDraw:
    """One random draw: 90-degree rotations, flips and an LR crop offset."""

    rot90: int = 0
    hflip: bool = False
    vflip: bool = False
    top: int = 0
    left: int = 0


def draw_augment(lr_shape: tuple[int, int], patch: int, rng: np.random.Generator, geometric: bool = True) -> AugmentDraw:
    h, w = lr_shape
    if patch > h or patch > w:
        raise ValueError(f"LR image {h}x{w} smaller than patch {patch}")
    top = int(rng.integers(0, h - patch + 1))
    left = int(rng.integers(0, w - patch + 1))
    if not geometric:
        return AugmentDraw(top=top, left=left)
    return AugmentDraw(int(rng.integers(0, 4)), bool(rng.integers(0, 2)), bool(rng.integers(0, 2)), top, left)


def apply_isometry(px: np.ndarray, draw: AugmentDraw) -> np.ndarray:
    if draw.hflip:
        px = px[:, ::-1]
    if draw.vflip:
        px = px[::-1]
    if draw.rot90:
        px = np.rot90(px, draw.rot90, axes=(0, 1))
    return np.ascontiguousarray(px)


def augment(
    lr: np.ndarray, hr: np.ndarray, s: int, patch: int | None, draw: AugmentDraw
) -> tuple[np.ndarray, np.ndarray]:
    """Crop an aligned pair (HR offset = s * LR offset) and apply the same isometry to both."""
    if hr.shape[0] != lr.shape[0] * s or hr.shape[1] != lr.shape[1] * s:
        raise ValueError(f"HR {hr.shape[:2]} is not {s}x LR {lr.shape[:2]}")
    if patch is not None:
        if patch > lr.shape[0] or patch > lr.shape[1]:
            raise ValueError(f"patch {patch} larger than LR image {lr.shape[:2]}")
        lr = lr[draw.top : draw.top + patch, draw.left : draw.left + patch]
        hr = hr[s * draw.top : s * (draw.top + patch), s * draw.left : s * (draw.left + patch)]
    return apply_isometry(lr, draw), apply_isometry(hr, draw)
