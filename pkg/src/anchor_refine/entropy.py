"""Per-pixel entropy, high-uncertainty region extraction, and anchor sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.special import xlogy

from .tensor import BinaryMask, ProbabilityMap

# Entropy values may exceed the ln(N) ceiling by at most this much (float32 rounding).
ENTROPY_BOUND_SLACK = 1e-5


@dataclass(frozen=True)
class EntropyMap:
    """Per-pixel Shannon entropy in nats, shape (H, W) float32.

    ``num_classes`` records the class count of the source probability map;
    values must lie in [0, ln(num_classes)] up to float32 rounding slack.
    """

    values: np.ndarray  # (H, W) float32
    num_classes: int

    def __post_init__(self) -> None:
        arr = self.values
        if arr.ndim != 2:
            raise ValueError(f"entropy map must be 2-D, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"entropy map dimensions must be positive, got {arr.shape}")
        if self.num_classes < 1:
            raise ValueError(f"class count must be positive, got {self.num_classes}")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if not np.isfinite(arr).all():
            raise ValueError("entropy values must be finite")
        ceiling = math.log(self.num_classes) + ENTROPY_BOUND_SLACK
        if arr.size and (float(arr.min()) < 0.0 or float(arr.max()) > ceiling):
            raise ValueError(
                f"entropy values must lie in [0, ln({self.num_classes})], "
                f"got range [{float(arr.min()):.6f}, {float(arr.max()):.6f}]"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FilterParams:
    """Window size and threshold for the high-entropy region filter."""

    w: int = 5
    tau: float = 1.0

    def __post_init__(self) -> None:
        if self.w < 1 or self.w % 2 == 0:
            raise ValueError(f"window size must be a positive odd integer, got {self.w}")
        if self.tau < 0.0:
            raise ValueError(f"threshold must be non-negative, got {self.tau}")


@dataclass(frozen=True)
class Anchor:
    """A prompt point in pixel coordinates (row, col)."""

    row: int
    col: int


def compute_entropy(pmap: ProbabilityMap) -> EntropyMap:
    """Shannon entropy of each pixel's class distribution, with 0 * ln(0) = 0.

    Terms are accumulated in float64 in sorted order, so the result is exactly
    invariant under any permutation of the class axis.
    """
    scores = pmap.data.astype(np.float64)
    terms = -xlogy(scores, scores)
    terms.sort(axis=2)
    values = terms.sum(axis=2).astype(np.float32)
    return EntropyMap(values, pmap.num_classes)


def region_filter(emap: EntropyMap, params: FilterParams) -> BinaryMask:
    """Mark pixels whose w*w box mean entropy reaches the threshold.

    Windows are centered and borders use replicate padding; a bit is set iff
    the window mean is >= tau.
    """
    if params.w > 2 * min(emap.height, emap.width) - 1:
        raise ValueError(
            f"window size {params.w} degenerates on a {emap.height}x{emap.width} map"
        )
    means = ndimage.uniform_filter(emap.values.astype(np.float64), size=params.w, mode="nearest")
    # The rolling accumulator can drift a hair below zero on all-zero plateaus;
    # a mean of non-negative values is non-negative, so clamp before comparing.
    np.maximum(means, 0.0, out=means)
    return BinaryMask(means >= params.tau)


def sample_anchors(region: BinaryMask, k: int, seed: int) -> list[Anchor]:
    """Sample up to k distinct anchor points uniformly from the set region pixels.

    If the region holds m <= k pixels, all m are returned.  Order is the seeded
    draw order; identical seeds reproduce identical lists.
    """
    if k < 0:
        raise ValueError(f"anchor count must be non-negative, got {k}")
    rows, cols = np.nonzero(region.bits)
    m = int(rows.size)
    if m == 0 or k == 0:
        return []
    rng = np.random.default_rng(seed)
    if m <= k:
        order = rng.permutation(m)
    else:
        order = rng.choice(m, size=k, replace=False)
    return [Anchor(int(rows[i]), int(cols[i])) for i in order]


def anchors_to_json(anchors: list[Anchor]) -> list[list[int]]:
    """Anchors as a JSON-ready array of [row, col] pairs."""
    return [[a.row, a.col] for a in anchors]


def anchors_from_json(obj: object) -> list[Anchor]:
    """Parse a JSON array of [row, col] pairs."""
    if not isinstance(obj, list):
        raise ValueError("anchor JSON must be an array of [row, col] pairs")
    anchors = []
    for pair in obj:
        if (
            not isinstance(pair, (list, tuple))
            or len(pair) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in pair)
        ):
            raise ValueError(f"anchor entry must be a [row, col] integer pair, got {pair!r}")
        anchors.append(Anchor(int(pair[0]), int(pair[1])))
    return anchors
