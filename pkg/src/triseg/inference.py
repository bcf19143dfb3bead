"""Multi-scale inference: run the model at several input scales, fuse the
probability maps back at the original resolution, threshold at rho."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, bilinear_resize, softmax_channels
from .volume import Axis, extract_slices, restack

_CHUNK = 16  # slices per forward pass; keeps im2col buffers small


@dataclass(frozen=True)
class InferenceConfig:
    scales: tuple[float, ...] = (1.25, 1.5, 1.75)
    rho: float = 0.5
    pad_policy: str = "reflect"

    def __post_init__(self):
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ValueError(f"scales must be non-empty and positive, got {self.scales}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.pad_policy not in ("reflect", "zero"):
            raise ValueError(f"pad_policy must be reflect or zero, got {self.pad_policy!r}")


def pad_to_multiple(batch: np.ndarray, multiple: int, policy: str) -> tuple[np.ndarray, tuple[int, int]]:
    """Pad the trailing two dims up to the next multiple; returns (padded, original hw)."""
    h, w = batch.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return batch, (h, w)
    spec = [(0, 0)] * (batch.ndim - 2) + [(0, ph), (0, pw)]
    if policy == "reflect":
        if ph >= h or pw >= w:
            raise ValueError(f"slice {h}x{w} too small to reflect-pad to a multiple of {multiple}")
        return np.pad(batch, spec, mode="reflect"), (h, w)
    return np.pad(batch, spec, mode="constant"), (h, w)


def _resize_batch(batch: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Plain-array bilinear resize of an (n, h, w) stack, align_corners=False."""
    t = bilinear_resize(Tensor(np.ascontiguousarray(batch)[:, None]), out_h, out_w)
    return t.data[:, 0]


def scale_probability(model, slices: np.ndarray, scale: float, pad_policy: str = "reflect") -> np.ndarray:
    """Foreground probability for an (n, h, w) stack of normalized slices,
    evaluated at one input scale and mapped back to the original size."""
    slices = np.asarray(slices, dtype=np.float32)
    if slices.ndim != 3:
        raise ValueError(f"expected (n, h, w) slices, got shape {slices.shape}")
    n, h, w = slices.shape
    sh = max(1, int(round(h * scale)))
    sw = max(1, int(round(w * scale)))
    stride = model.output_stride
    if sh + (-sh) % stride < stride or sw + (-sw) % stride < stride:
        raise ValueError(f"scale {scale} shrinks {h}x{w} below one output-stride cell")
    out = np.empty((n, h, w), dtype=np.float32)
    for start in range(0, n, _CHUNK):
        chunk = slices[start:start + _CHUNK]
        scaled = _resize_batch(chunk, sh, sw)
        padded, _ = pad_to_multiple(scaled, stride, pad_policy)
        probs = softmax_channels(model.forward(padded[:, None], mode="eval")).data[:, 1]
        out[start:start + _CHUNK] = _resize_batch(probs[:, :sh, :sw], h, w)
    return out


def fuse_probabilities(per_scale: list[np.ndarray]) -> np.ndarray:
    """Mean probability over scales, accumulated in a fixed order."""
    if not per_scale:
        raise ValueError("nothing to fuse")
    acc = np.zeros_like(per_scale[0], dtype=np.float64)
    for p in per_scale:
        if p.shape != per_scale[0].shape:
            raise ValueError("per-scale probability maps must share a shape")
        acc += p
    return (acc / len(per_scale)).astype(np.float32)


def binarize(prob: np.ndarray, rho: float) -> np.ndarray:
    """Strictly-greater threshold: a pixel at exactly rho stays background."""
    return (np.asarray(prob) > rho).astype(np.uint8)


def infer_multiscale(model, slice_2d: np.ndarray, cfg: InferenceConfig) -> tuple[np.ndarray, np.ndarray]:
    """Fused probability map and binary mask for a single normalized slice."""
    arr = np.asarray(slice_2d, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"expected one (h, w) slice, got shape {arr.shape}")
    per_scale = [scale_probability(model, arr[None], s, cfg.pad_policy)[0] for s in cfg.scales]
    fused = fuse_probabilities(per_scale)
    return fused, binarize(fused, cfg.rho)


def view_scale_probabilities(model, volume: np.ndarray, axis: Axis,
                             cfg: InferenceConfig) -> dict[float, np.ndarray]:
    """Per-scale probability slice stacks for one view of a normalized volume.

    Keeping the per-scale stacks lets callers score single-scale variants and
    the fused variant from one forward sweep.
    """
    slices = extract_slices(volume, axis)
    return {s: scale_probability(model, slices, s, cfg.pad_policy) for s in cfg.scales}


def infer_view(model, volume: np.ndarray, axis: Axis, cfg: InferenceConfig) -> np.ndarray:
    """Binary per-view volume: multi-scale fusion per slice, restacked to (W, H, L)."""
    per_scale = view_scale_probabilities(model, volume, axis, cfg)
    fused = fuse_probabilities([per_scale[s] for s in cfg.scales])
    return restack(binarize(fused, cfg.rho), axis)
