import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from memtrack.exceptions import CorruptMaskError, DimensionError
from memtrack.mask_ops import (
    RleMask,
    intersection_area,
    mask_area,
    rle_decode,
    rle_encode,
    union_area,
)


def test_encode_empty_and_full():
    assert rle_encode(np.zeros((2, 2))).counts == (4,)
    assert rle_encode(np.ones((2, 2))).counts == (0, 4)


def test_encode_single_pixel_column_major():
    grid = np.zeros((2, 2), dtype=bool)
    grid[0, 0] = True
    assert rle_encode(grid).counts == (0, 1, 3)


def test_column_major_order():
    # (row 1, col 0) is the second pixel in column-major order, (row 0, col 1) the third
    grid = np.zeros((2, 2), dtype=bool)
    grid[1, 0] = True
    assert rle_encode(grid).counts == (1, 1, 2)
    grid = np.zeros((2, 2), dtype=bool)
    grid[0, 1] = True
    assert rle_encode(grid).counts == (2, 1, 1)


@pytest.mark.parametrize("counts, expected", [
    ((4,), [[0, 0], [0, 0]]),
    ((0, 4), [[1, 1], [1, 1]]),
    ((0, 1, 3), [[1, 0], [0, 0]]),
])
def test_decode(counts, expected):
    np.testing.assert_array_equal(rle_decode(RleMask(2, 2, counts)), np.array(expected, dtype=bool))


@pytest.mark.parametrize("counts, area", [((4,), 0), ((0, 4), 4), ((0, 1, 3), 1)])
def test_area(counts, area):
    assert mask_area(RleMask(2, 2, counts)) == area


def test_intersection_examples():
    left = rle_encode(np.array([[1, 0], [1, 0]]))
    top = rle_encode(np.array([[1, 1], [0, 0]]))
    assert intersection_area(left, top) == 1
    assert intersection_area(left, left) == mask_area(left)
    a = rle_encode(np.array([[1, 0], [0, 0]]))
    b = rle_encode(np.array([[0, 0], [0, 1]]))
    assert intersection_area(a, b) == 0
    assert union_area(left, top) == 3


def test_zero_sized_bitmap_rejected():
    with pytest.raises(DimensionError):
        rle_encode(np.zeros((0, 3)))
    with pytest.raises(DimensionError):
        RleMask(0, 2, (0,))


def test_corrupt_counts_rejected():
    with pytest.raises(CorruptMaskError):
        RleMask(2, 2, (1, 2))
    with pytest.raises(CorruptMaskError):
        RleMask(2, 2, (2, -1, 3))


def test_intersection_dimension_mismatch():
    with pytest.raises(DimensionError):
        intersection_area(RleMask.empty(2, 2), RleMask.empty(2, 3))


def test_non_canonical_counts_are_normalized():
    # interior zero-length runs merge their neighbours
    m = RleMask(2, 3, (1, 0, 2, 2, 0, 0, 1))
    assert m.counts == (3, 2, 1)
    assert RleMask(2, 2, (0, 0, 4)).counts == (4,)
    assert RleMask(2, 2, (0, 4, 0)).counts == (0, 4)


def test_huge_mask_rejected():
    with pytest.raises(DimensionError):
        RleMask(2**17, 2**16, (2**33,))


def test_json_round_trip():
    m = rle_encode(np.eye(3))
    assert RleMask.from_json(m.to_json()) == m
    with pytest.raises(CorruptMaskError):
        RleMask.from_json({"size": [2, 2], "counts": "abc"})


bitmaps = st.tuples(st.integers(1, 64), st.integers(1, 64)).flatmap(
    lambda hw: arrays(np.bool_, hw)
)


@settings(max_examples=200, deadline=None)
@given(bitmaps)
def test_round_trip_property(bitmap):
    m = rle_encode(bitmap)
    np.testing.assert_array_equal(rle_decode(m), bitmap)
    assert mask_area(m) == int(bitmap.sum())
    assert all(c > 0 for c in m.counts[1:])


@settings(max_examples=200, deadline=None)
@given(st.tuples(st.integers(1, 32), st.integers(1, 32)).flatmap(
    lambda hw: st.tuples(arrays(np.bool_, hw), arrays(np.bool_, hw))))
def test_intersection_matches_dense(pair):
    a, b = pair
    ra, rb = rle_encode(a), rle_encode(b)
    inter = intersection_area(ra, rb)
    assert inter == int((a & b).sum())
    assert inter <= min(mask_area(ra), mask_area(rb))
    assert union_area(ra, rb) == int((a | b).sum())
