"""Confusion-matrix accumulation and IoU evaluation reports."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import ClassMap


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count matrix indexed [truth][prediction]."""

    cells: np.ndarray  # (n, n) int64

    def __post_init__(self) -> None:
        arr = self.cells
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"confusion matrix must be square, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("confusion matrix needs at least one class")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"confusion counts must be integers, got dtype {arr.dtype}")
        if arr.size and int(arr.min()) < 0:
            raise ValueError("confusion counts must be non-negative")
        arr = np.ascontiguousarray(arr, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "cells", arr)

    @property
    def num_classes(self) -> int:
        return self.cells.shape[0]

    @property
    def pixel_count(self) -> int:
        return int(self.cells.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.num_classes != other.num_classes:
            raise ValueError(
                f"cannot merge confusion matrices over {self.num_classes} and "
                f"{other.num_classes} classes"
            )
        return ConfusionMatrix(self.cells + other.cells)


def accumulate_confusion(
    pred: ClassMap, truth: ClassMap, num_classes: int, ignore_label: int | None = None
) -> ConfusionMatrix:
    """Count (truth, prediction) label pairs, skipping pixels whose truth label
    equals ``ignore_label``."""
    if num_classes < 1:
        raise ValueError(f"class count must be positive, got {num_classes}")
    if (pred.height, pred.width) != (truth.height, truth.width):
        raise ValueError(
            f"prediction {pred.height}x{pred.width} does not match truth "
            f"{truth.height}x{truth.width}"
        )
    t = truth.labels.astype(np.int64).ravel()
    p = pred.labels.astype(np.int64).ravel()
    if ignore_label is not None:
        keep = t != ignore_label
        t = t[keep]
        p = p[keep]
    if t.size and int(t.max()) >= num_classes:
        raise ValueError(f"truth label {int(t.max())} outside 0..{num_classes - 1}")
    if p.size and int(p.max()) >= num_classes:
        raise ValueError(f"predicted label {int(p.max())} outside 0..{num_classes - 1}")
    cells = np.bincount(t * num_classes + p, minlength=num_classes * num_classes)
    return ConfusionMatrix(cells.reshape(num_classes, num_classes))


def iou_per_class(cm: ConfusionMatrix) -> list[float | None]:
    """Intersection over union per class; None when the class never occurs in
    either prediction or truth."""
    cells = cm.cells
    tp = np.diag(cells)
    union = cells.sum(axis=0) + cells.sum(axis=1) - tp
    out: list[float | None] = []
    for c in range(cm.num_classes):
        if union[c] == 0:
            out.append(None)
        else:
            out.append(float(tp[c]) / float(union[c]))
    return out


def mean_iou(cm: ConfusionMatrix) -> float:
    """Mean IoU over classes that occur; NaN when no class occurs at all."""
    defined = [v for v in iou_per_class(cm) if v is not None]
    if not defined:
        return math.nan
    return sum(defined) / len(defined)


@dataclass(frozen=True)
class EvalReport:
    """Evaluation summary: per-class IoU, mean IoU, pixel count, and the
    effective configuration echoed verbatim."""

    per_class_iou: tuple[float | None, ...]
    miou: float
    pixel_count: int
    config: dict

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix, config: dict) -> "EvalReport":
        return cls(
            per_class_iou=tuple(iou_per_class(cm)),
            miou=mean_iou(cm),
            pixel_count=cm.pixel_count,
            config=dict(config),
        )

    def to_json_dict(self) -> dict:
        return {
            "per_class_iou": list(self.per_class_iou),
            "miou": None if math.isnan(self.miou) else self.miou,
            "pixel_count": self.pixel_count,
            "config": dict(self.config),
        }
