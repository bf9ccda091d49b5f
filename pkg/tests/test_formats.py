"""File format round-trips and rejection paths."""
from __future__ import annotations

import struct

import numpy as np
import pytest

from anchor_refine import (
    BinaryMask,
    ClassMap,
    EntropyMap,
    FormatError,
    ProbabilityMap,
    load_binary_mask,
    load_class_map,
    load_entropy_map,
    load_probability_map,
    store_binary_mask,
    store_class_map,
    store_entropy_map,
    store_probability_map,
)


def _random_probability_map(rng: np.random.Generator) -> ProbabilityMap:
    height = int(rng.integers(1, 8))
    width = int(rng.integers(1, 8))
    n = int(rng.integers(2, 6))
    raw = rng.random((height, width, n)) + 1e-3
    raw /= raw.sum(axis=2, keepdims=True)
    return ProbabilityMap(raw.astype(np.float32))


def test_ptm_single_pixel_two_class_is_24_bytes(tmp_path) -> None:
    path = tmp_path / "p.ptm"
    store_probability_map(ProbabilityMap(np.array([[[0.5, 0.5]]], dtype=np.float32)), path)
    data = path.read_bytes()
    assert len(data) == 24
    assert data[:4] == b"PTM1"
    assert struct.unpack("<III", data[4:16]) == (1, 1, 2)
    assert struct.unpack("<2f", data[16:]) == (0.5, 0.5)


def test_ptm_round_trip_preserves_bytes(tmp_path) -> None:
    rng = np.random.default_rng(3)
    pmap = _random_probability_map(rng)
    path = tmp_path / "p.ptm"
    store_probability_map(pmap, path)
    loaded = load_probability_map(path)
    assert np.array_equal(loaded.data, pmap.data)
    second = tmp_path / "q.ptm"
    store_probability_map(loaded, second)
    assert path.read_bytes() == second.read_bytes()


def test_ptm_rejects_bad_magic(tmp_path) -> None:
    path = tmp_path / "p.ptm"
    path.write_bytes(b"XTM1" + struct.pack("<III", 1, 1, 2) + b"\0" * 8)
    with pytest.raises(FormatError, match="magic"):
        load_probability_map(path)


def test_ptm_rejects_truncated_and_oversized_payload(tmp_path) -> None:
    good = b"PTM1" + struct.pack("<III", 1, 1, 2) + struct.pack("<2f", 0.5, 0.5)
    path = tmp_path / "p.ptm"
    path.write_bytes(good[:-1])
    with pytest.raises(FormatError, match="payload"):
        load_probability_map(path)
    path.write_bytes(good + b"\0")
    with pytest.raises(FormatError, match="payload"):
        load_probability_map(path)


def test_ptm_rejects_zero_dimension(tmp_path) -> None:
    path = tmp_path / "p.ptm"
    path.write_bytes(b"PTM1" + struct.pack("<III", 0, 1, 2))
    with pytest.raises(FormatError, match="positive"):
        load_probability_map(path)


def test_ptm_rejects_bad_sums_at_load(tmp_path) -> None:
    path = tmp_path / "p.ptm"
    payload = struct.pack("<2f", 0.9, 0.9)
    path.write_bytes(b"PTM1" + struct.pack("<III", 1, 1, 2) + payload)
    with pytest.raises(FormatError, match="row=0"):
        load_probability_map(path)


def test_ptm_missing_file_raises_file_not_found(tmp_path) -> None:
    with pytest.raises(FileNotFoundError):
        load_probability_map(tmp_path / "absent.ptm")


def test_entropy_map_round_trip(tmp_path) -> None:
    values = np.array([[0.0, 1.5], [2.0, 0.25]], dtype=np.float32)
    emap = EntropyMap(values, num_classes=18)
    path = tmp_path / "e.ent"
    store_entropy_map(emap, path)
    loaded = load_entropy_map(path)
    assert np.array_equal(loaded.values, values)
    assert loaded.num_classes == 18


def test_entropy_map_load_rejects_values_over_ceiling(tmp_path) -> None:
    path = tmp_path / "e.ent"
    # ln(2) is about 0.693; store 0.8 under a 2-class header
    path.write_bytes(b"ENT1" + struct.pack("<III", 1, 1, 2) + struct.pack("<f", 0.8))
    with pytest.raises(FormatError):
        load_entropy_map(path)


def test_pgm_class_map_round_trip(tmp_path) -> None:
    labels = np.arange(12, dtype=np.uint8).reshape(3, 4)
    path = tmp_path / "c.pgm"
    store_class_map(ClassMap(labels), path)
    data = path.read_bytes()
    assert data.startswith(b"P5\n4 3\n255\n")
    loaded = load_class_map(path)
    assert np.array_equal(loaded.labels, labels)


def test_pgm_header_comments_are_skipped(tmp_path) -> None:
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment\n2 2\n# another\n255\n\x01\x02\x03\x04")
    loaded = load_class_map(path)
    assert np.array_equal(loaded.labels, np.array([[1, 2], [3, 4]], dtype=np.uint8))


def test_pgm_rejects_ascii_variant_and_bad_maxval(tmp_path) -> None:
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P2\n2 2\n255\n0 1 2 3\n")
    with pytest.raises(FormatError, match="P5"):
        load_class_map(path)
    path.write_bytes(b"P5\n2 2\n65535\n" + b"\0" * 8)
    with pytest.raises(FormatError, match="maxval"):
        load_class_map(path)


def test_pgm_rejects_payload_size_mismatch(tmp_path) -> None:
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n2 2\n255\n\x00\x01\x02")
    with pytest.raises(FormatError, match="payload"):
        load_class_map(path)


def test_mask_pgm_rejects_intermediate_values(tmp_path) -> None:
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5\n2 1\n255\n\x00\x80")
    with pytest.raises(FormatError, match="128"):
        load_binary_mask(path)


def test_mask_pgm_round_trip(tmp_path) -> None:
    mask = BinaryMask(np.array([[True, False], [False, True]]))
    path = tmp_path / "m.pgm"
    store_binary_mask(mask, path)
    data = path.read_bytes()
    assert data.endswith(b"\xff\x00\x00\xff")
    loaded = load_binary_mask(path)
    assert np.array_equal(loaded.bits, mask.bits)


def test_format_round_trips_random(tmp_path) -> None:
    # covered again at acceptance scale; quick spot check here
    rng = np.random.default_rng(9)
    path = tmp_path / "x.ptm"
    for _ in range(20):
        pmap = _random_probability_map(rng)
        store_probability_map(pmap, path)
        assert np.array_equal(load_probability_map(path).data, pmap.data)
