"""Minimum-risk mask fusion: filter, class assignment, ordering, and overwrite.

Candidate masks are kept only when confident (score >= alpha) and small
(area <= beta).  Each surviving mask takes the majority label of the pixels it
covers in the original prediction, masks are applied largest first, and later
writes win, so smaller masks end up on top.  This bounds the damage a single
bad mask can cause while letting nested structures keep their fine labels.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .backends import CandidateMask, SegmenterBackend, SegmenterRequest
from .entropy import FilterParams, compute_entropy, region_filter, sample_anchors
from .tensor import BinaryMask, ClassMap, ProbabilityMap

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FusionParams:
    """Acceptance thresholds and stage toggles for prediction refinement."""

    alpha: float = 0.7
    beta: int = 20000
    enhance: bool = True
    use_filter: bool = True
    use_sort: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"score threshold must lie in [0, 1], got {self.alpha}")
        if self.beta < 1:
            raise ValueError(f"area threshold must be positive, got {self.beta}")


@dataclass(frozen=True)
class ClassedMask:
    """A candidate mask with its assigned class label."""

    mask: BinaryMask
    cls: int
    area: int
    anchor_index: int


def filter_masks(masks: list[CandidateMask], alpha: float, beta: int) -> list[CandidateMask]:
    """Keep masks that are confident (score >= alpha) and small (area <= beta)."""
    return [m for m in masks if m.score >= alpha and m.area <= beta]


def assign_class(mask: BinaryMask, prediction: ClassMap) -> int:
    """Most frequent label under the mask in the original prediction; ties
    resolve to the smallest class id.  An empty mask has no mode and errors."""
    if (mask.height, mask.width) != (prediction.height, prediction.width):
        raise ValueError(
            f"mask {mask.height}x{mask.width} does not match prediction "
            f"{prediction.height}x{prediction.width}"
        )
    covered = prediction.labels[mask.bits]
    if covered.size == 0:
        raise ValueError("empty mask has no label mode")
    return int(np.bincount(covered).argmax())


def sort_masks(masks: list[ClassedMask]) -> list[ClassedMask]:
    """Order masks by descending area; equal areas keep their input order."""
    return sorted(masks, key=lambda m: -m.area)


def overwrite(prediction: ClassMap, ordered: list[ClassedMask]) -> ClassMap:
    """Apply masks in order onto a copy of the prediction; later writes win."""
    out = np.array(prediction.labels)
    for m in ordered:
        if (m.mask.height, m.mask.width) != out.shape:
            raise ValueError(
                f"mask {m.mask.height}x{m.mask.width} does not match prediction "
                f"{out.shape[0]}x{out.shape[1]}"
            )
        out[m.mask.bits] = m.cls
    return ClassMap(out)


def refine(
    prediction: ClassMap,
    pmap: ProbabilityMap,
    filter_params: FilterParams,
    fusion_params: FusionParams,
    k: int,
    seed: int,
    backend: SegmenterBackend,
    *,
    image_id: str = "",
) -> ClassMap:
    """Refine a prediction by prompting a segmenter at high-entropy anchors.

    With ``enhance`` off the prediction is returned unchanged (as a copy).
    Per-anchor backend failures and empty candidate masks are logged and
    skipped; classes are always assigned against the original prediction, not
    intermediate overwrites.
    """
    if (prediction.height, prediction.width) != (pmap.height, pmap.width):
        raise ValueError(
            f"prediction {prediction.height}x{prediction.width} does not match "
            f"probability map {pmap.height}x{pmap.width}"
        )
    if not fusion_params.enhance:
        return ClassMap(np.array(prediction.labels))
    emap = compute_entropy(pmap)
    region = region_filter(emap, filter_params)
    anchors = sample_anchors(region, k, seed)
    request = SegmenterRequest(image_id, prediction.height, prediction.width, tuple(anchors))
    outcome = backend.segment(request)
    for failure in outcome.failures:
        logger.warning("anchor %d failed: %s", failure.anchor_index, failure.message)
    masks = list(outcome.masks)
    if fusion_params.use_filter:
        masks = filter_masks(masks, fusion_params.alpha, fusion_params.beta)
    classed = []
    for m in masks:
        if m.area == 0:
            logger.warning("dropping empty candidate mask from anchor %d", m.anchor_index)
            continue
        classed.append(ClassedMask(m.mask, assign_class(m.mask, prediction), m.area, m.anchor_index))
    ordered = sort_masks(classed) if fusion_params.use_sort else classed
    return overwrite(prediction, ordered)
