"""Independent brute-force oracles used to cross-check the implementation.

Everything here is pure Python over lists, written without looking at the
package internals: per-pixel entropy via math.log, clamped-index window means,
Counter-based modes, a hand-rolled stable selection sort, and a sequential
mask-fusion simulator.  Keep this module numpy-free so it stays an
independent route.
"""
from __future__ import annotations

import math
from collections import Counter


def entropy_of(probs: list[float]) -> float:
    """Shannon entropy in nats with 0 * ln(0) = 0."""
    total = 0.0
    for p in probs:
        if p > 0.0:
            total -= p * math.log(p)
    return total


def box_mean(values: list[list[float]], w: int) -> list[list[float]]:
    """Centered w*w window means with replicate (clamped index) padding."""
    height = len(values)
    width = len(values[0])
    half = (w - 1) // 2
    out = [[0.0] * width for _ in range(height)]
    for r in range(height):
        for c in range(width):
            total = 0.0
            for dr in range(-half, half + 1):
                for dc in range(-half, half + 1):
                    rr = min(max(r + dr, 0), height - 1)
                    cc = min(max(c + dc, 0), width - 1)
                    total += values[rr][cc]
            out[r][c] = total / (w * w)
    return out


def threshold_regions(values: list[list[float]], w: int, tau: float) -> list[list[bool]]:
    """Bits where the window mean reaches tau."""
    means = box_mean(values, w)
    return [[m >= tau for m in row] for row in means]


def mode_smallest(labels: list[int]) -> int:
    """Most frequent label; ties resolve to the smallest label."""
    counts = Counter(labels)
    best = max(counts.values())
    return min(label for label, count in counts.items() if count == best)


def stable_sort_desc_by_area(items: list) -> list:
    """Stable descending sort by .area using repeated earliest-max selection."""
    remaining = list(items)
    ordered = []
    while remaining:
        best_index = 0
        for i in range(1, len(remaining)):
            if remaining[i].area > remaining[best_index].area:
                best_index = i
        ordered.append(remaining.pop(best_index))
    return ordered


class SimMask:
    """A candidate mask for the fusion simulator: row-major bit grid."""

    def __init__(self, bits: list[list[bool]], score: float, anchor_index: int) -> None:
        self.bits = bits
        self.score = score
        self.anchor_index = anchor_index
        self.area = sum(1 for row in bits for b in row if b)


def simulate_refine(
    y: list[list[int]],
    masks: list[SimMask],
    alpha: float,
    beta: int,
    enhance: bool,
    use_filter: bool,
    use_sort: bool,
) -> list[list[int]]:
    """Sequential mask-fusion simulator mirroring the pipeline contract.

    Filter keeps masks with score >= alpha and area <= beta.  Classes come
    from the label mode over the original y (ties to the smallest label);
    empty masks are dropped.  Masks apply largest area first when sorting is
    on (stable for equal areas), in given order otherwise; later writes win.
    """
    out = [row[:] for row in y]
    if not enhance:
        return out
    kept = list(masks)
    if use_filter:
        kept = [m for m in kept if m.score >= alpha and m.area <= beta]
    kept = [m for m in kept if m.area > 0]
    classed = []
    for m in kept:
        covered = [
            y[r][c]
            for r in range(len(y))
            for c in range(len(y[0]))
            if m.bits[r][c]
        ]
        classed.append((m, mode_smallest(covered)))

    class _Entry:
        def __init__(self, mask: SimMask, cls: int) -> None:
            self.mask = mask
            self.cls = cls
            self.area = mask.area

    entries = [_Entry(m, cls) for m, cls in classed]
    if use_sort:
        entries = stable_sort_desc_by_area(entries)
    for entry in entries:
        for r in range(len(y)):
            for c in range(len(y[0])):
                if entry.mask.bits[r][c]:
                    out[r][c] = entry.cls
    return out


def rle_scan(bits_flat: list[bool]) -> list[int]:
    """Canonical run counts for a flat bit list, starting with a zero run."""
    counts = []
    current = False
    run = 0
    for bit in bits_flat:
        if bit == current:
            run += 1
        else:
            counts.append(run)
            current = bit
            run = 1
    counts.append(run)
    return counts


def iou_from_pairs(pairs: list[tuple[int, int]], num_classes: int) -> list[float | None]:
    """Per-class IoU from (truth, pred) pixel pairs; None when undefined."""
    tp = [0] * num_classes
    fp = [0] * num_classes
    fn = [0] * num_classes
    for truth, pred in pairs:
        if truth == pred:
            tp[truth] += 1
        else:
            fn[truth] += 1
            fp[pred] += 1
    out: list[float | None] = []
    for c in range(num_classes):
        union = tp[c] + fp[c] + fn[c]
        out.append(None if union == 0 else tp[c] / union)
    return out
