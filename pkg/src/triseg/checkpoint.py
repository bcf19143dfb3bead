"""Binary checkpoint files.

Layout: magic ``MSANCKPT\\0`` (9 bytes), version u32 LE, manifest length
u64 LE, manifest JSON (UTF-8), then the raw little-endian tensor payloads.
The manifest carries an architecture descriptor plus one entry per tensor
(name, shape, dtype, byte offset relative to the payload section), so a
checkpoint is self-describing.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MSANCKPT\x00"
VERSION = 1

_DTYPES = {"float32": np.dtype("<f4"), "float64": np.dtype("<f8")}


class CheckpointError(Exception):
    """Base class for malformed checkpoint files."""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


def save_checkpoint(path, arch: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write architecture metadata and named arrays; ordering follows the dict."""
    entries = []
    payloads = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        dtype_name = arr.dtype.name
        if dtype_name not in _DTYPES:
            raise ValueError(f"unsupported tensor dtype {arr.dtype} for {name!r}")
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[dtype_name]).tobytes()
        entries.append({"name": name, "shape": list(arr.shape),
                        "dtype": dtype_name, "offset": offset})
        payloads.append(raw)
        offset += len(raw)
    manifest = json.dumps({"arch": arch, "tensors": entries},
                          sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for raw in payloads:
            fh.write(raw)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read back (arch, {name: array}); arrays come out in native byte order."""
    blob = Path(path).read_bytes()
    probe = min(len(blob), len(MAGIC))
    if blob[:probe] != MAGIC[:probe]:
        raise BadMagicError(f"{path}: not a checkpoint file")
    pos = len(MAGIC)
    if len(blob) < pos + 12:
        raise TruncatedCheckpointError(f"{path}: header cut short")
    (version,) = struct.unpack_from("<I", blob, pos)
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    (manifest_len,) = struct.unpack_from("<Q", blob, pos + 4)
    pos += 12
    if len(blob) < pos + manifest_len:
        raise TruncatedCheckpointError(f"{path}: manifest cut short")
    try:
        manifest = json.loads(blob[pos : pos + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: manifest is not valid JSON") from exc
    pos += manifest_len

    tensors: dict[str, np.ndarray] = {}
    payload = blob[pos:]
    for entry in manifest["tensors"]:
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError(f"{path}: unknown dtype {entry['dtype']!r}")
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if shape else dtype.itemsize
        start = entry["offset"]
        if start + nbytes > len(payload):
            raise TruncatedCheckpointError(f"{path}: payload for {entry['name']!r} cut short")
        arr = np.frombuffer(payload, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)) or 1,
                            offset=start)
        tensors[entry["name"]] = arr.reshape(shape).astype(arr.dtype.newbyteorder("="))
    return manifest["arch"], tensors
