"""Tri-view slicing, restacking and majority voting."""

import numpy as np
import pytest

from oracles import majority_naive
from triseg.volume import ALL_AXES, Axis, extract_slices, majority_vote, restack


def _volume(seed=0, dims=(6, 5, 4)):
    return np.random.default_rng(seed).random(dims).astype(np.float32)


# ---------------------------------------------------------------------------
# slicing conventions
# ---------------------------------------------------------------------------

def test_axial_gives_depth_many_hw_slices():
    vol = _volume()                       # (W, H, L) = (6, 5, 4)
    stack = extract_slices(vol, Axis.AXIAL)
    assert stack.shape == (4, 5, 6)       # L slices of shape H x W


def test_slice_counts_match_axis_dimension():
    vol = _volume()
    assert extract_slices(vol, Axis.CORONAL).shape[0] == 6    # W slices
    assert extract_slices(vol, Axis.SAGITTAL).shape[0] == 5   # H slices
    assert extract_slices(vol, Axis.AXIAL).shape[0] == 4      # L slices


def test_voxel_index_mapping_oracle():
    # voxel (w, h, l) = (2, 3, 5): axial slice 5 at (3, 2), coronal slice 2 at
    # (3, 5), sagittal slice 3 at (2, 5)
    vol = np.zeros((7, 6, 8), dtype=np.float32)
    vol[2, 3, 5] = 1.0
    assert extract_slices(vol, Axis.AXIAL)[5][3, 2] == 1.0
    assert extract_slices(vol, Axis.CORONAL)[2][3, 5] == 1.0
    assert extract_slices(vol, Axis.SAGITTAL)[3][2, 5] == 1.0
    for axis in ALL_AXES:
        assert extract_slices(vol, axis).sum() == 1.0


@pytest.mark.parametrize("axis", ALL_AXES, ids=[a.value for a in ALL_AXES])
def test_extract_restack_roundtrip_is_bit_exact(axis):
    vol = _volume(seed=1, dims=(5, 7, 3))
    np.testing.assert_array_equal(restack(extract_slices(vol, axis), axis), vol)


def test_axis_parsing():
    assert Axis.from_name("axial") is Axis.AXIAL
    assert Axis.from_name("coronal") is Axis.CORONAL
    with pytest.raises(ValueError):
        Axis.from_name("oblique")


# ---------------------------------------------------------------------------
# majority vote
# ---------------------------------------------------------------------------

def test_identical_masks_vote_to_themselves():
    m = (np.random.default_rng(2).random((4, 4, 4)) > 0.5).astype(np.uint8)
    np.testing.assert_array_equal(majority_vote(m, m, m), m)


def test_two_of_three_rule_single_voxel():
    one = np.ones((1, 1, 1), dtype=np.uint8)
    zero = np.zeros((1, 1, 1), dtype=np.uint8)
    assert majority_vote(one, one, zero)[0, 0, 0] == 1
    assert majority_vote(one, zero, zero)[0, 0, 0] == 0
    assert majority_vote(zero, zero, zero)[0, 0, 0] == 0
    assert majority_vote(one, one, one)[0, 0, 0] == 1


def test_full_truth_table():
    combos = np.array([[a, b, c] for a in (0, 1) for b in (0, 1) for c in (0, 1)], dtype=np.uint8)
    m1 = combos[:, 0].reshape(8, 1, 1)
    m2 = combos[:, 1].reshape(8, 1, 1)
    m3 = combos[:, 2].reshape(8, 1, 1)
    got = majority_vote(m1, m2, m3).ravel()
    expected = (combos.sum(axis=1) >= 2).astype(np.uint8)
    np.testing.assert_array_equal(got, expected)


def test_random_triples_match_truth_table_oracle():
    rng = np.random.default_rng(3)
    for _ in range(10):
        masks = [(rng.random((4, 4, 4)) > 0.5).astype(np.uint8) for _ in range(3)]
        np.testing.assert_array_equal(majority_vote(*masks), majority_naive(*masks))


def test_vote_is_permutation_invariant():
    rng = np.random.default_rng(4)
    a, b, c = [(rng.random((3, 5, 2)) > 0.4).astype(np.uint8) for _ in range(3)]
    base = majority_vote(a, b, c)
    for trio in ((a, c, b), (b, a, c), (c, b, a), (b, c, a), (c, a, b)):
        np.testing.assert_array_equal(majority_vote(*trio), base)


def test_vote_lies_between_and_and_or():
    rng = np.random.default_rng(5)
    a, b, c = [(rng.random((4, 4, 4)) > 0.5).astype(np.uint8) for _ in range(3)]
    v = majority_vote(a, b, c)
    assert ((a & b & c) <= v).all()
    assert (v <= (a | b | c)).all()


def test_vote_rejects_bad_input():
    good = np.zeros((2, 2, 2), dtype=np.uint8)
    with pytest.raises(ValueError):
        majority_vote(good, good, np.zeros((2, 2, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        majority_vote(good, good, np.full((2, 2, 2), 2, dtype=np.uint8))
