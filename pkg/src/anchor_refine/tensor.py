"""Core dense map types and run-length mask encoding shared across the pipeline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Per-pixel probability sums may deviate from 1.0 by at most this much.
PROB_SUM_TOLERANCE = 1e-4


def _first_index(bad: np.ndarray) -> tuple[int, int]:
    """Row/col of the first True entry of a 2-D boolean array, row-major."""
    flat = int(np.flatnonzero(bad)[0])
    return flat // bad.shape[1], flat % bad.shape[1]


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-pixel class scores, shape (H, W, N) float32 with the class axis innermost.

    The constructor takes ownership of ``data``, converts it to contiguous
    float32 and marks it read-only.  Scores outside [0, 1] or pixels whose
    scores do not sum to 1 within PROB_SUM_TOLERANCE are rejected, never
    normalized.
    """

    data: np.ndarray  # (H, W, N) float32

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"probability data must have shape (H, W, N), got {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"probability map dimensions must be positive, got {arr.shape}")
        low = arr < 0.0
        high = arr > 1.0
        if low.any() or high.any():
            bad = (low | high).any(axis=2)
            row, col = _first_index(bad)
            raise ValueError(f"score out of [0, 1] at pixel (row={row}, col={col})")
        sums = arr.sum(axis=2, dtype=np.float64)
        bad = np.abs(sums - 1.0) > PROB_SUM_TOLERANCE
        if bad.any():
            row, col = _first_index(bad)
            raise ValueError(
                f"pixel (row={row}, col={col}) scores sum to {sums[row, col]:.6f},"
                f" expected 1 within {PROB_SUM_TOLERANCE}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def num_classes(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ClassMap:
    """Per-pixel class labels, shape (H, W) uint8, read-only after construction."""

    labels: np.ndarray  # (H, W) uint8

    def __post_init__(self) -> None:
        arr = self.labels
        if arr.ndim != 2:
            raise ValueError(f"class map must be 2-D, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"class map dimensions must be positive, got {arr.shape}")
        if arr.dtype != np.uint8:
            if not np.issubdtype(arr.dtype, np.integer):
                raise ValueError(f"class labels must be integers, got dtype {arr.dtype}")
            if arr.size and (int(arr.min()) < 0 or int(arr.max()) > 255):
                raise ValueError("class labels must fit in uint8 (0..255)")
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class BinaryMask:
    """Boolean pixel mask, shape (H, W), read-only after construction."""

    bits: np.ndarray  # (H, W) bool

    def __post_init__(self) -> None:
        arr = self.bits
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"mask dimensions must be positive, got {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=bool)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def area(self) -> int:
        """Number of set pixels."""
        return int(self.bits.sum())


@dataclass(frozen=True)
class RunLengthEncoding:
    """Row-major run-length encoding of a binary mask.

    Counts alternate between runs of zeros and ones, always starting with a
    zero run (possibly of length 0).  Counts must be non-negative and sum to
    height * width.
    """

    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError(f"mask dimensions must be positive, got {self.height}x{self.width}")
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError("run counts must be non-negative")
        total = sum(counts)
        if total != self.height * self.width:
            raise ValueError(
                f"run counts sum to {total}, expected {self.height}x{self.width}"
                f"={self.height * self.width}"
            )
        object.__setattr__(self, "counts", counts)

    def to_json_dict(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "RunLengthEncoding":
        if not isinstance(obj, dict) or "size" not in obj or "counts" not in obj:
            raise ValueError("run-length JSON must have 'size' and 'counts' keys")
        size = obj["size"]
        if not isinstance(size, (list, tuple)) or len(size) != 2:
            raise ValueError("run-length 'size' must be a [height, width] pair")
        counts = obj["counts"]
        if not isinstance(counts, (list, tuple)) or not all(
            isinstance(c, int) and not isinstance(c, bool) for c in counts
        ):
            raise ValueError("run-length 'counts' must be a list of integers")
        return cls(int(size[0]), int(size[1]), tuple(counts))


def rle_encode(mask: BinaryMask) -> RunLengthEncoding:
    """Encode a mask into canonical run counts (leading zero run only if pixel 0 is set)."""
    flat = mask.bits.ravel()
    # boundaries between runs: indices where the value changes
    changes = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    edges = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(edges).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return RunLengthEncoding(mask.height, mask.width, tuple(int(c) for c in counts))


def rle_decode(rle: RunLengthEncoding) -> BinaryMask:
    """Expand run counts back into a boolean mask."""
    values = np.arange(len(rle.counts)) % 2
    flat = np.repeat(values.astype(bool), np.asarray(rle.counts, dtype=np.int64))
    return BinaryMask(flat.reshape(rle.height, rle.width))
