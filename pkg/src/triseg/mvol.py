"""MVOL: the tiny binary container for volumes and masks.

Layout (all integers little-endian):

    bytes 0..3    magic b"MVOL"
    bytes 4..7    format version, u32 (currently 1)
    bytes 8..11   dtype code, u32: 0 = real32 intensities, 1 = u8 mask
    bytes 12..35  W, H, L as three u64
    bytes 36..    payload, row-major with L fastest

Mask payloads are one byte per voxel, each 0 or 1. Round-trips are bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"MVOL"
VERSION = 1
HEADER = struct.Struct("<4sIIQQQ")  # 36 bytes before the payload
HEADER_SIZE = HEADER.size

DTYPE_REAL32 = 0
DTYPE_MASK_U8 = 1

# u64 dims could nominally address absurd volumes; cap the voxel count so a
# corrupt header cannot trigger a giant allocation.
MAX_VOXELS = 1 << 34


class MvolError(Exception):
    """Base class for malformed MVOL files."""


class BadMagicError(MvolError):
    pass


class VersionMismatchError(MvolError):
    pass


class TruncatedPayloadError(MvolError):
    pass


class DimOverflowError(MvolError):
    pass


def write_mvol(path, array: np.ndarray) -> None:
    """Write a (W, H, L) volume (float32) or mask (uint8, values in {0,1})."""
    arr = np.asarray(array)
    if arr.ndim != 3:
        raise ValueError(f"expected a (W, H, L) array, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        code = DTYPE_MASK_U8
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("u8 payload must be a binary mask")
    elif arr.dtype == np.float32:
        code = DTYPE_REAL32
        if not np.isfinite(arr).all():
            raise ValueError("volume payload must be finite")
    else:
        raise TypeError(f"dtype {arr.dtype} not supported; use float32 or uint8")
    w, h, l = arr.shape
    payload = np.ascontiguousarray(arr)
    if payload.dtype.byteorder == ">":  # pragma: no cover - big-endian hosts only
        payload = payload.astype(payload.dtype.newbyteorder("<"))
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, code, w, h, l))
        f.write(payload.tobytes())


def read_mvol(path) -> np.ndarray:
    with open(path, "rb") as f:
        head = f.read(HEADER_SIZE)
        probe = min(len(head), len(MAGIC))
        if head[:probe] != MAGIC[:probe]:
            raise BadMagicError(f"{path}: bad magic {head[:probe]!r}")
        if len(head) < HEADER_SIZE:
            raise TruncatedPayloadError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
        magic, version, code, w, h, l = HEADER.unpack(head)
        if version != VERSION:
            raise VersionMismatchError(f"{path}: version {version}, reader supports {VERSION}")
        if code == DTYPE_REAL32:
            dtype = np.dtype("<f4")
        elif code == DTYPE_MASK_U8:
            dtype = np.dtype("u1")
        else:
            raise MvolError(f"{path}: unknown dtype code {code}")
        n_voxels = w * h * l
        if min(w, h, l) < 1 or n_voxels > MAX_VOXELS:
            raise DimOverflowError(f"{path}: implausible dims {(w, h, l)}")
        raw = f.read(n_voxels * dtype.itemsize + 1)
    if len(raw) < n_voxels * dtype.itemsize:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(raw)} bytes, expected {n_voxels * dtype.itemsize}"
        )
    if len(raw) > n_voxels * dtype.itemsize:
        raise MvolError(f"{path}: trailing bytes after payload")
    arr = np.frombuffer(raw, dtype=dtype).reshape(w, h, l)
    if code == DTYPE_MASK_U8 and not np.isin(arr, (0, 1)).all():
        raise MvolError(f"{path}: mask payload contains values outside {{0,1}}")
    return arr.astype(arr.dtype.newbyteorder("="))
