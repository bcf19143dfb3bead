"""Three-view slicing of (W, H, L) volumes and majority-vote fusion.

Index convention, fixed once and enforced by tests:

* volumes are numpy arrays of shape (W, H, L), row-major with L fastest;
* axial slice at depth l is the (H, W) plane: ``slice[h, w] == vol[w, h, l]``;
* coronal slice at width w is the (H, L) plane: ``slice[h, l] == vol[w, h, l]``;
* sagittal slice at height h is the (W, L) plane: ``slice[w, l] == vol[w, h, l]``.

Voxel spacing is metadata only and never resampled; slices are fed to the
2-D models as-is.
"""

from __future__ import annotations

import enum

import numpy as np


class Axis(enum.Enum):
    CORONAL = "coronal"
    SAGITTAL = "sagittal"
    AXIAL = "axial"

    @classmethod
    def from_name(cls, name: str) -> "Axis":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown axis {name!r}; expected coronal, sagittal or axial") from None


ALL_AXES = (Axis.CORONAL, Axis.SAGITTAL, Axis.AXIAL)


def _require_volume(vol: np.ndarray) -> np.ndarray:
    vol = np.asarray(vol)
    if vol.ndim != 3:
        raise ValueError(f"expected a (W, H, L) volume, got shape {vol.shape}")
    return vol


def extract_slices(volume: np.ndarray, axis: Axis) -> np.ndarray:
    """Stack of 2-D slices along ``axis``; slices[i] follows the module convention."""
    vol = _require_volume(volume)
    if axis is Axis.AXIAL:
        return np.ascontiguousarray(vol.transpose(2, 1, 0))   # (L, H, W)
    if axis is Axis.CORONAL:
        return np.ascontiguousarray(vol)                       # (W, H, L)
    return np.ascontiguousarray(vol.transpose(1, 0, 2))        # (H, W, L)


def restack(slices: np.ndarray, axis: Axis) -> np.ndarray:
    """Inverse of extract_slices: rebuild the (W, H, L) volume."""
    stack = np.asarray(slices)
    if stack.ndim != 3:
        raise ValueError(f"expected a stack of 2-D slices, got shape {stack.shape}")
    if axis is Axis.AXIAL:
        return np.ascontiguousarray(stack.transpose(2, 1, 0))
    if axis is Axis.CORONAL:
        return np.ascontiguousarray(stack)
    return np.ascontiguousarray(stack.transpose(1, 0, 2))


def majority_vote(z_c: np.ndarray, z_s: np.ndarray, z_a: np.ndarray) -> np.ndarray:
    """Per-voxel 2-of-3 vote over the three per-view binary volumes."""
    masks = [np.asarray(m) for m in (z_c, z_s, z_a)]
    if not (masks[0].shape == masks[1].shape == masks[2].shape):
        raise ValueError(f"mask dims differ: {[m.shape for m in masks]}")
    for m in masks:
        if not np.isin(m, (0, 1)).all():
            raise ValueError("majority_vote expects binary masks")
    votes = masks[0].astype(np.uint8) + masks[1] + masks[2]
    return (votes >= 2).astype(np.uint8)
