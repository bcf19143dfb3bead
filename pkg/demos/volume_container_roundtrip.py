# Anatomy of the .mvol container: a 36-byte little-endian header (magic,
# version, dtype code, three u64 dimensions) followed by the raw voxel
# payload, last axis fastest.  Written masks come back bit-for-bit.

import struct
import tempfile
from pathlib import Path

import numpy as np

from triseg.mvol import HEADER_SIZE, read_mvol, write_mvol

rng = np.random.default_rng(11)
mask = (rng.random((5, 6, 7)) > 0.7).astype(np.uint8)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.mvol"
    write_mvol(path, mask)
    raw = path.read_bytes()

    print(f"file size: {len(raw)} bytes "
          f"({HEADER_SIZE} header + {mask.size} payload)\n")

    magic, version, code, w, h, l = struct.unpack("<4sIIQQQ", raw[:HEADER_SIZE])
    print("header fields:")
    print(f"  magic    {magic!r}")
    print(f"  version  {version}")
    print(f"  dtype    code {code} (uint8 mask)")
    print(f"  dims     {w} x {h} x {l}")

    print("\nfirst header bytes:")
    print("  " + " ".join(f"{b:02x}" for b in raw[:16]))

    back = read_mvol(path)
    print(f"\nround trip: dtype {back.dtype}, shape {back.shape}, "
          f"bit-identical: {np.array_equal(back, mask)}")
    # payload order check: byte k of the payload is voxel (k // (6*7), ...)
    flat_ok = bytes(mask.reshape(-1)) == raw[HEADER_SIZE:]
    print(f"payload is row-major with the last axis fastest: {flat_ok}")
