"""Volume container format: layout, round-trips, error taxonomy."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triseg.mvol import (
    HEADER,
    HEADER_SIZE,
    MAGIC,
    VERSION,
    BadMagicError,
    DimOverflowError,
    MvolError,
    TruncatedPayloadError,
    VersionMismatchError,
    read_mvol,
    write_mvol,
)


def _header(magic=MAGIC, version=VERSION, code=0, dims=(2, 2, 2)):
    return HEADER.pack(magic, version, code, *dims)


# ---------------------------------------------------------------------------
# layout
# ---------------------------------------------------------------------------

def test_header_is_exactly_36_bytes(tmp_path):
    # 4 magic + 4 version + 4 dtype code + 3 x 8 dims
    assert HEADER_SIZE == HEADER.size == 4 + 4 + 4 + 3 * 8 == 36
    path = tmp_path / "v.mvol"
    write_mvol(path, np.zeros((64, 64, 64), dtype=np.float32))
    assert path.stat().st_size == 36 + 64 * 64 * 64 * 4


def test_header_fields_are_little_endian(tmp_path):
    path = tmp_path / "v.mvol"
    write_mvol(path, np.zeros((3, 4, 5), dtype=np.float32))
    blob = path.read_bytes()
    assert blob[:4] == b"MVOL"
    assert struct.unpack("<I", blob[4:8])[0] == VERSION
    assert struct.unpack("<I", blob[8:12])[0] == 0
    assert struct.unpack("<QQQ", blob[12:36]) == (3, 4, 5)


def test_payload_is_row_major_depth_fastest(tmp_path):
    vol = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    path = tmp_path / "v.mvol"
    write_mvol(path, vol)
    payload = np.frombuffer(path.read_bytes()[36:], dtype="<f4")
    np.testing.assert_array_equal(payload, np.arange(24, dtype=np.float32))


# ---------------------------------------------------------------------------
# round-trips
# ---------------------------------------------------------------------------

def test_volume_roundtrip_bit_exact(tmp_path):
    vol = np.random.default_rng(0).standard_normal((5, 7, 3)).astype(np.float32)
    path = tmp_path / "v.mvol"
    write_mvol(path, vol)
    got = read_mvol(path)
    assert got.dtype == np.float32
    np.testing.assert_array_equal(got, vol)


def test_mask_roundtrip_bit_exact(tmp_path):
    mask = (np.random.default_rng(1).random((4, 6, 5)) > 0.5).astype(np.uint8)
    path = tmp_path / "m.mvol"
    write_mvol(path, mask)
    got = read_mvol(path)
    assert got.dtype == np.uint8
    np.testing.assert_array_equal(got, mask)


@settings(max_examples=25, deadline=None)
@given(
    dims=st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6)),
    kind=st.sampled_from(["volume", "mask"]),
    seed=st.integers(0, 2**31 - 1),
)
def test_roundtrip_property(tmp_path_factory, dims, kind, seed):
    rng = np.random.default_rng(seed)
    if kind == "volume":
        arr = (rng.standard_normal(dims) * 300).astype(np.float32)
    else:
        arr = (rng.random(dims) > 0.5).astype(np.uint8)
    path = tmp_path_factory.mktemp("mvol") / "x.mvol"
    write_mvol(path, arr)
    np.testing.assert_array_equal(read_mvol(path), arr)


# ---------------------------------------------------------------------------
# writer validation
# ---------------------------------------------------------------------------

def test_writer_rejects_bad_payloads(tmp_path):
    path = tmp_path / "x.mvol"
    with pytest.raises(ValueError):
        write_mvol(path, np.zeros((2, 2), dtype=np.float32))          # not 3-d
    with pytest.raises(TypeError):
        write_mvol(path, np.zeros((2, 2, 2), dtype=np.float64))       # wrong dtype
    with pytest.raises(ValueError):
        write_mvol(path, np.full((2, 2, 2), 2, dtype=np.uint8))       # non-binary mask
    bad = np.zeros((2, 2, 2), dtype=np.float32)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        write_mvol(path, bad)                                         # non-finite volume


# ---------------------------------------------------------------------------
# reader error taxonomy — each corruption gets its own distinct error
# ---------------------------------------------------------------------------

def test_bad_magic(tmp_path):
    path = tmp_path / "bad.mvol"
    path.write_bytes(_header(magic=b"LOVM") + b"\x00" * 32)
    with pytest.raises(BadMagicError):
        read_mvol(path)


def test_short_file_with_garbage_is_bad_magic(tmp_path):
    path = tmp_path / "bad.mvol"
    path.write_bytes(b"XY")
    with pytest.raises(BadMagicError):
        read_mvol(path)


def test_short_file_with_valid_prefix_is_truncated(tmp_path):
    path = tmp_path / "short.mvol"
    path.write_bytes(MAGIC + b"\x01")
    with pytest.raises(TruncatedPayloadError):
        read_mvol(path)


def test_version_mismatch(tmp_path):
    path = tmp_path / "vers.mvol"
    path.write_bytes(_header(version=99) + b"\x00" * 32)
    with pytest.raises(VersionMismatchError):
        read_mvol(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "trunc.mvol"
    write_mvol(path, np.zeros((2, 2, 2), dtype=np.float32))
    blob = path.read_bytes()
    path.write_bytes(blob[:-5])
    with pytest.raises(TruncatedPayloadError):
        read_mvol(path)


def test_dim_overflow_is_not_an_allocation(tmp_path):
    path = tmp_path / "dims.mvol"
    path.write_bytes(_header(dims=(1 << 40, 1 << 40, 1 << 40)))
    with pytest.raises(DimOverflowError):
        read_mvol(path)


def test_zero_dimension_rejected(tmp_path):
    path = tmp_path / "zero.mvol"
    path.write_bytes(_header(dims=(0, 4, 4)))
    with pytest.raises(DimOverflowError):
        read_mvol(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "extra.mvol"
    write_mvol(path, np.zeros((2, 2, 2), dtype=np.float32))
    with open(path, "ab") as f:
        f.write(b"\x00")
    with pytest.raises(MvolError, match="trailing"):
        read_mvol(path)


def test_unknown_dtype_code(tmp_path):
    path = tmp_path / "code.mvol"
    path.write_bytes(_header(code=7, dims=(1, 1, 1)) + b"\x00" * 4)
    with pytest.raises(MvolError, match="dtype"):
        read_mvol(path)


def test_non_binary_mask_payload_rejected(tmp_path):
    path = tmp_path / "mask.mvol"
    path.write_bytes(_header(code=1, dims=(1, 1, 2)) + bytes([0, 3]))
    with pytest.raises(MvolError):
        read_mvol(path)


def test_taxonomy_classes_are_distinct():
    errors = [BadMagicError, VersionMismatchError, TruncatedPayloadError, DimOverflowError]
    for e in errors:
        assert issubclass(e, MvolError)
    for a in errors:
        for b in errors:
            if a is not b:
                assert not issubclass(a, b)
