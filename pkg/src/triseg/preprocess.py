"""Intensity windowing and training-time augmentation for 2-D slices.

Rotation is counterclockwise about the exact slice center (the same sense as
``np.rot90``); images are resampled bilinearly with zero fill outside the
rotated support, masks with nearest-neighbor so they stay binary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WindowSpec:
    """Clamp to [hu_min, hu_max] then map linearly onto [0, out_max]."""

    hu_min: float = -80.0
    hu_max: float = 320.0
    out_max: float = 255.0

    def __post_init__(self):
        if not self.hu_min < self.hu_max:
            raise ValueError(f"degenerate window [{self.hu_min}, {self.hu_max}]")
        if self.out_max <= 0:
            raise ValueError(f"out_max must be > 0, got {self.out_max}")


@dataclass(frozen=True)
class AugmentSpec:
    rot_min_deg: float = 0.0
    rot_max_deg: float = 15.0
    train_scales: tuple[float, ...] = (1.25, 1.5, 1.75)
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.rot_min_deg <= self.rot_max_deg:
            raise ValueError(f"bad rotation range [{self.rot_min_deg}, {self.rot_max_deg}]")
        if not self.train_scales:
            raise ValueError("train_scales must be non-empty")
        if any(s <= 0 for s in self.train_scales):
            raise ValueError(f"scales must be positive, got {self.train_scales}")


def hu_window_normalize(volume: np.ndarray, spec: WindowSpec = WindowSpec()) -> np.ndarray:
    """Windowed copy of ``volume``: clamp, then rescale to [0, out_max]."""
    vol = np.asarray(volume, dtype=np.float32)
    if vol.size and not np.isfinite(vol).all():
        raise ValueError("volume contains non-finite voxels")
    clamped = np.clip(vol, spec.hu_min, spec.hu_max)
    return (clamped - spec.hu_min) * (spec.out_max / (spec.hu_max - spec.hu_min))


def _rotation_sources(h: int, w: int, angle_deg: float):
    """Source sampling coordinates for a counterclockwise rotation."""
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    yo, xo = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    xs = xo * cos_t - yo * sin_t + cx
    ys = xo * sin_t + yo * cos_t + cy
    return ys, xs


def rotate_bilinear(image: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate a 2-D image; bilinear sampling, zero outside the support."""
    src = np.asarray(image)
    if src.ndim != 2:
        raise ValueError(f"expected a 2-D slice, got shape {src.shape}")
    if angle_deg == 0.0:
        return src.copy()
    img = src.astype(np.float64)
    h, w = img.shape
    ys, xs = _rotation_sources(h, w, angle_deg)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    fy = ys - y0
    fx = xs - x0
    out = np.zeros_like(img)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            yy = y0 + dy
            xx = x0 + dx
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            weight = wy * wx * valid
            out += weight * img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
    return out.astype(src.dtype, copy=False)


def rotate_nearest(image: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate a 2-D array with nearest-neighbor sampling and zero fill.

    Values are only moved, never blended, so binary masks stay binary.
    """
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D slice, got shape {img.shape}")
    if angle_deg == 0.0:
        return img.copy()
    h, w = img.shape
    ys, xs = _rotation_sources(h, w, angle_deg)
    yy = np.round(ys).astype(np.intp)
    xx = np.round(xs).astype(np.intp)
    valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
    out = np.zeros_like(img)
    out[valid] = img[yy[valid], xx[valid]]
    return out


def random_rotation(
    image: np.ndarray,
    mask: np.ndarray,
    spec: AugmentSpec,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Draw one angle from [rot_min, rot_max] and rotate image and mask jointly."""
    angle = float(rng.uniform(spec.rot_min_deg, spec.rot_max_deg))
    return rotate_bilinear(image, angle), rotate_nearest(mask, angle), angle


def sample_scale(spec: AugmentSpec, rng: np.random.Generator) -> float:
    """Uniform draw from the configured training scales."""
    scales = spec.train_scales
    if not scales:
        raise ValueError("no scales to sample from")
    return float(scales[int(rng.integers(len(scales)))])


def nearest_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize of a 2-D array (used for masks)."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D slice, got shape {img.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resize target must be >= 1x1, got {out_h}x{out_w}")
    h, w = img.shape
    rows = np.minimum((np.arange(out_h) + 0.5) * h // out_h, h - 1).astype(np.intp)
    cols = np.minimum((np.arange(out_w) + 0.5) * w // out_w, w - 1).astype(np.intp)
    return img[rows[:, None], cols[None, :]]
