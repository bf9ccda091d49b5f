"""Core map types and run-length encoding."""
from __future__ import annotations

import numpy as np
import pytest

from anchor_refine import (
    BinaryMask,
    ClassMap,
    ProbabilityMap,
    RunLengthEncoding,
    rle_decode,
    rle_encode,
)
from reference import rle_scan


def _uniform_map(height: int, width: int, n: int) -> ProbabilityMap:
    return ProbabilityMap(np.full((height, width, n), 1.0 / n, dtype=np.float32))


def test_probability_map_accepts_valid_data() -> None:
    pmap = _uniform_map(3, 4, 5)
    assert (pmap.height, pmap.width, pmap.num_classes) == (3, 4, 5)
    assert pmap.data.dtype == np.float32
    assert not pmap.data.flags.writeable


def test_probability_map_rejects_bad_shapes() -> None:
    with pytest.raises(ValueError):
        ProbabilityMap(np.zeros((3, 4), dtype=np.float32))
    with pytest.raises(ValueError):
        ProbabilityMap(np.zeros((0, 4, 2), dtype=np.float32))


def test_probability_map_rejects_out_of_range_scores() -> None:
    data = np.full((2, 2, 2), 0.5, dtype=np.float32)
    data[1, 0, 0] = -0.25
    data[1, 0, 1] = 1.25
    with pytest.raises(ValueError) as err:
        ProbabilityMap(data)
    assert "row=1" in str(err.value) and "col=0" in str(err.value)


def test_probability_map_rejects_bad_sums_with_pixel_index() -> None:
    data = np.full((2, 3, 2), 0.5, dtype=np.float32)
    data[0, 2] = (0.6, 0.6)
    with pytest.raises(ValueError) as err:
        ProbabilityMap(data)
    assert "row=0" in str(err.value) and "col=2" in str(err.value)


def test_probability_map_sum_tolerance_boundary() -> None:
    # deviation right at 1e-4 passes, clearly beyond fails
    data = np.full((1, 1, 2), 0.5, dtype=np.float64)
    data[0, 0, 0] += 9e-5
    ProbabilityMap(data.astype(np.float32))
    data[0, 0, 0] = 0.5 + 3e-4
    with pytest.raises(ValueError):
        ProbabilityMap(data.astype(np.float32))


def test_class_map_dtype_and_range() -> None:
    cmap = ClassMap(np.array([[0, 255], [17, 3]], dtype=np.int64))
    assert cmap.labels.dtype == np.uint8
    with pytest.raises(ValueError):
        ClassMap(np.array([[0, 256]], dtype=np.int64))
    with pytest.raises(ValueError):
        ClassMap(np.array([[0.5]], dtype=np.float32))
    with pytest.raises(ValueError):
        ClassMap(np.zeros((0, 3), dtype=np.uint8))


def test_binary_mask_area() -> None:
    mask = BinaryMask(np.array([[True, False], [True, True]]))
    assert mask.area == 3
    assert (mask.height, mask.width) == (2, 2)


def test_rle_counts_must_sum_to_size() -> None:
    with pytest.raises(ValueError):
        RunLengthEncoding(2, 2, (1, 2))
    with pytest.raises(ValueError):
        RunLengthEncoding(2, 2, (1, -1, 4))
    RunLengthEncoding(2, 2, (1, 2, 1))


def test_rle_hand_case() -> None:
    # 2x2 mask with pixels (0,1) and (1,0): row-major 0,1,1,0
    mask = BinaryMask(np.array([[False, True], [True, False]]))
    rle = rle_encode(mask)
    assert rle.counts == (1, 2, 1)
    assert rle_scan([False, True, True, False]) == [1, 2, 1]
    back = rle_decode(rle)
    assert np.array_equal(back.bits, mask.bits)


def test_rle_leading_zero_run_when_first_pixel_set() -> None:
    mask = BinaryMask(np.array([[True, True], [False, False]]))
    rle = rle_encode(mask)
    assert rle.counts == (0, 2, 2)
    assert rle.counts[:1] == (0,)


def test_rle_canonical_no_interior_zero_runs() -> None:
    rng = np.random.default_rng(11)
    for _ in range(50):
        height = int(rng.integers(1, 9))
        width = int(rng.integers(1, 9))
        mask = BinaryMask(rng.random((height, width)) < 0.5)
        rle = rle_encode(mask)
        # interior counts are strictly positive; only the first may be zero
        assert all(c > 0 for c in rle.counts[1:])
        assert rle_scan(mask.bits.ravel().tolist()) == list(rle.counts)


def test_rle_round_trip_random() -> None:
    rng = np.random.default_rng(5)
    for _ in range(100):
        height = int(rng.integers(1, 12))
        width = int(rng.integers(1, 12))
        mask = BinaryMask(rng.random((height, width)) < rng.random())
        back = rle_decode(rle_encode(mask))
        assert np.array_equal(back.bits, mask.bits)


def test_rle_json_round_trip_and_validation() -> None:
    rle = RunLengthEncoding(2, 2, (1, 2, 1))
    obj = rle.to_json_dict()
    assert obj == {"size": [2, 2], "counts": [1, 2, 1]}
    assert RunLengthEncoding.from_json_dict(obj) == rle
    with pytest.raises(ValueError):
        RunLengthEncoding.from_json_dict({"counts": [4]})
    with pytest.raises(ValueError):
        RunLengthEncoding.from_json_dict({"size": [2], "counts": [4]})
    with pytest.raises(ValueError):
        RunLengthEncoding.from_json_dict({"size": [2, 2], "counts": [1.0, 3]})


def test_equal_masks_encode_equally() -> None:
    rng = np.random.default_rng(23)
    for _ in range(25):
        bits = rng.random((6, 7)) < 0.4
        a = rle_encode(BinaryMask(bits))
        b = rle_encode(BinaryMask(bits.copy()))
        assert a == b
