"""Binary file formats: probability tensors, entropy maps, and PGM images.

Probability tensors use a fixed little-endian layout: the 4-byte magic
``PTM1``, three u32 fields (height, width, classes), then height*width*classes
float32 values row-major with the class index innermost.  No padding, no
checksum.  Entropy maps use the same header shape under the magic ``ENT1``
(the third u32 records the source class count) followed by height*width
float32 values.  Class maps and masks are binary PGM (P5, maxval 255); masks
hold only 0 and 255 where 255 means inside.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .entropy import EntropyMap
from .tensor import BinaryMask, ClassMap, ProbabilityMap

PTM_MAGIC = b"PTM1"
ENT_MAGIC = b"ENT1"

_HEADER = struct.Struct("<III")


class FormatError(ValueError):
    """A file does not conform to its declared format."""


def _read_bytes(path: str | Path) -> bytes:
    return Path(path).read_bytes()


def _parse_float_header(data: bytes, magic: bytes, path: str | Path) -> tuple[int, int, int]:
    if len(data) < 4 + _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    if data[:4] != magic:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {magic!r}")
    return _HEADER.unpack_from(data, 4)


def store_probability_map(pmap: ProbabilityMap, path: str | Path) -> None:
    """Write a probability tensor in the PTM1 layout."""
    header = PTM_MAGIC + _HEADER.pack(pmap.height, pmap.width, pmap.num_classes)
    Path(path).write_bytes(header + pmap.data.astype("<f4", copy=False).tobytes())


def load_probability_map(path: str | Path) -> ProbabilityMap:
    """Read a PTM1 tensor, rejecting malformed headers, payloads, and invariant violations."""
    data = _read_bytes(path)
    height, width, classes = _parse_float_header(data, PTM_MAGIC, path)
    if min(height, width, classes) < 1:
        raise FormatError(f"{path}: dimensions must be positive, got {height}x{width}x{classes}")
    expected = height * width * classes * 4
    payload = len(data) - 4 - _HEADER.size
    if payload != expected:
        raise FormatError(f"{path}: payload is {payload} bytes, expected {expected}")
    arr = np.frombuffer(data, dtype="<f4", offset=4 + _HEADER.size).reshape(height, width, classes)
    try:
        return ProbabilityMap(arr)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def store_entropy_map(emap: EntropyMap, path: str | Path) -> None:
    """Write an entropy map in the ENT1 layout."""
    header = ENT_MAGIC + _HEADER.pack(emap.height, emap.width, emap.num_classes)
    Path(path).write_bytes(header + emap.values.astype("<f4", copy=False).tobytes())


def load_entropy_map(path: str | Path) -> EntropyMap:
    """Read an ENT1 entropy map, validating the value range against the class count."""
    data = _read_bytes(path)
    height, width, classes = _parse_float_header(data, ENT_MAGIC, path)
    if min(height, width, classes) < 1:
        raise FormatError(f"{path}: dimensions must be positive, got {height}x{width}x{classes}")
    expected = height * width * 4
    payload = len(data) - 4 - _HEADER.size
    if payload != expected:
        raise FormatError(f"{path}: payload is {payload} bytes, expected {expected}")
    arr = np.frombuffer(data, dtype="<f4", offset=4 + _HEADER.size).reshape(height, width)
    try:
        return EntropyMap(arr, classes)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _parse_pgm(data: bytes, path: str | Path) -> np.ndarray:
    """Parse a binary PGM (P5, maxval 255) into a (H, W) uint8 array."""
    if data[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5), got magic {data[:2]!r}")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        # skip whitespace and '#' comment lines between header tokens
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise FormatError(f"{path}: malformed PGM header token {token!r}")
        fields.append(int(token))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: PGM maxval must be 255, got {maxval}")
    if min(height, width) < 1:
        raise FormatError(f"{path}: dimensions must be positive, got {height}x{width}")
    payload = data[pos:]
    if len(payload) != height * width:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {height * width}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)


def load_class_map(path: str | Path) -> ClassMap:
    """Read a class map stored as binary PGM."""
    return ClassMap(_parse_pgm(_read_bytes(path), path))


def store_class_map(cmap: ClassMap, path: str | Path) -> None:
    """Write a class map as binary PGM (P5, maxval 255)."""
    header = b"P5\n%d %d\n255\n" % (cmap.width, cmap.height)
    Path(path).write_bytes(header + cmap.labels.tobytes())


def load_binary_mask(path: str | Path) -> BinaryMask:
    """Read a mask stored as binary PGM holding only 0 and 255 (255 = inside)."""
    arr = _parse_pgm(_read_bytes(path), path)
    bad = (arr != 0) & (arr != 255)
    if bad.any():
        value = int(arr[bad][0])
        raise FormatError(f"{path}: mask pixels must be 0 or 255, found {value}")
    return BinaryMask(arr == 255)


def store_binary_mask(mask: BinaryMask, path: str | Path) -> None:
    """Write a mask as binary PGM with 255 for inside pixels."""
    header = b"P5\n%d %d\n255\n" % (mask.width, mask.height)
    Path(path).write_bytes(header + np.where(mask.bits, 255, 0).astype(np.uint8).tobytes())
