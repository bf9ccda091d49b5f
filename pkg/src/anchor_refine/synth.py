"""Synthetic scene generation and the refinement ablation harness.

Scenes hold non-overlapping rectangle/circle entities on a background of class
0.  Each configured entity gets a small corruption zone where the base
probabilities favor a wrong label with high entropy, so the base prediction
mislabels the zone while the rest of the scene stays clean.  Because zones
cover a minority of their entity, the majority label under a repaired mask is
still the true class and refinement can fix the zone.

Decoy masks make the ablation toggles matter: an oversized low-risk-violating
mask (fails the area bound), a low-confidence mask (fails the score bound),
and a large background-majority mask that is only harmless when larger masks
are applied first.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backends import (
    BackendRequestError,
    CandidateMask,
    MockOracleBackend,
    SceneEntity,
    SceneSpec,
    SegmentationOutcome,
    SegmenterBackend,
    SegmenterRequest,
    rasterize_ownership,
    scene_from_json,
    scene_to_json,
)
from .entropy import FilterParams
from .fusion import FusionParams, refine
from .metrics import ConfusionMatrix, EvalReport, accumulate_confusion
from .tensor import BinaryMask, ClassMap, ProbabilityMap, RunLengthEncoding, rle_decode, rle_encode

ATTACH_FIRST = "first"
ATTACH_LAST = "last"

OVERSIZED_DECOY_SCORE = 0.9
LOW_DECOY_SCORE = 0.3
SORT_DECOY_SCORE = 0.95


@dataclass(frozen=True)
class SceneParams:
    """Generation knobs for synthetic scenes."""

    height: int = 64
    width: int = 64
    num_classes: int = 8
    min_entities: int = 3
    max_entities: int = 5
    min_entity_size: int = 12
    max_entity_size: int = 20
    noise_level: float = 0.0
    corruption_mix: float = 0.85
    corruption_cap: float = 0.45
    min_zone_side: int = 7
    entity_score: float = 0.95
    with_decoys: bool = False
    beta_hint: int = 1100

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError(f"scene dimensions must be positive, got {self.height}x{self.width}")
        if self.num_classes < 2:
            raise ValueError(f"scene needs at least 2 classes, got {self.num_classes}")
        if not 1 <= self.min_entities <= self.max_entities:
            raise ValueError(
                f"entity count range is invalid: {self.min_entities}..{self.max_entities}"
            )
        if not 1 <= self.min_entity_size <= self.max_entity_size:
            raise ValueError(
                f"entity size range is invalid: {self.min_entity_size}..{self.max_entity_size}"
            )
        if self.max_entity_size > min(self.height, self.width):
            raise ValueError(
                f"entities of size {self.max_entity_size} do not fit a "
                f"{self.height}x{self.width} scene"
            )
        if not 0.0 <= self.noise_level <= 1.0:
            raise ValueError(f"noise level must lie in [0, 1], got {self.noise_level}")
        if not 0.0 <= self.corruption_mix <= 1.0:
            raise ValueError(f"corruption mix must lie in [0, 1], got {self.corruption_mix}")
        if not 0.0 < self.corruption_cap < 1.0:
            raise ValueError(f"corruption cap must lie in (0, 1), got {self.corruption_cap}")
        if self.min_zone_side < 1:
            raise ValueError(f"zone side must be positive, got {self.min_zone_side}")
        if not 0.0 <= self.entity_score <= 1.0:
            raise ValueError(f"entity score must lie in [0, 1], got {self.entity_score}")
        if self.beta_hint < 1:
            raise ValueError(f"area bound hint must be positive, got {self.beta_hint}")


@dataclass(frozen=True)
class CorruptionZone:
    """A square region of an entity whose base probabilities favor a wrong label."""

    entity_index: int
    top: int
    left: int
    side: int
    wrong_cls: int


@dataclass(frozen=True)
class DecoyRule:
    """Appends a fixed candidate mask when an anchor falls inside the zone.

    The zone is an inclusive (r0, c0, r1, c1) rectangle.  ``attach`` picks
    which matching anchor carries the mask: the first or the last one.
    """

    zone: tuple[int, int, int, int]
    mask: BinaryMask
    score: float
    attach: str = ATTACH_LAST

    def __post_init__(self) -> None:
        r0, c0, r1, c1 = (int(v) for v in self.zone)
        if not (0 <= r0 <= r1 and 0 <= c0 <= c1):
            raise ValueError(f"decoy zone is invalid: {self.zone}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"decoy score must lie in [0, 1], got {self.score}")
        if self.attach not in (ATTACH_FIRST, ATTACH_LAST):
            raise ValueError(f"decoy attach must be 'first' or 'last', got {self.attach!r}")
        object.__setattr__(self, "zone", (r0, c0, r1, c1))

    def matches(self, row: int, col: int) -> bool:
        r0, c0, r1, c1 = self.zone
        return r0 <= row <= r1 and c0 <= col <= c1


class DecoyBackend:
    """Wraps a backend and appends rule-based decoy masks at matching anchors.

    Decoys are appended after the inner backend's masks for the same anchor, so
    the combined result still lists masks by ascending anchor index.
    """

    def __init__(self, inner: SegmenterBackend, rules: tuple[DecoyRule, ...]) -> None:
        self.inner = inner
        self.rules = tuple(rules)

    def segment(self, request: SegmenterRequest) -> SegmentationOutcome:
        outcome = self.inner.segment(request)
        extras: dict[int, list[CandidateMask]] = {}
        for rule in self.rules:
            if (rule.mask.height, rule.mask.width) != (request.height, request.width):
                raise BackendRequestError(
                    f"decoy mask is {rule.mask.height}x{rule.mask.width} but request is "
                    f"{request.height}x{request.width}"
                )
            hits = [
                i for i, a in enumerate(request.anchors) if rule.matches(a.row, a.col)
            ]
            if not hits:
                continue
            target = hits[0] if rule.attach == ATTACH_FIRST else hits[-1]
            extras.setdefault(target, []).append(CandidateMask(rule.mask, rule.score, target))
        if not extras:
            return outcome
        buckets: dict[int, list[CandidateMask]] = {}
        for mask in outcome.masks:
            buckets.setdefault(mask.anchor_index, []).append(mask)
        for target, masks in extras.items():
            buckets.setdefault(target, []).extend(masks)
        merged = [mask for index in sorted(buckets) for mask in buckets[index]]
        return SegmentationOutcome(tuple(merged), outcome.failures)


@dataclass(frozen=True)
class SyntheticScene:
    """A generated scene bundle: geometry, truth labels, base probabilities."""

    scene: SceneSpec
    truth: ClassMap
    prob: ProbabilityMap
    corruptions: tuple[CorruptionZone, ...] = ()
    decoys: tuple[DecoyRule, ...] = ()

    def base_prediction(self) -> ClassMap:
        """Per-pixel argmax of the base probabilities (first max wins)."""
        return ClassMap(np.argmax(self.prob.data, axis=2).astype(np.uint8))

    def backend(self) -> SegmenterBackend:
        """Scene oracle, wrapped with decoy rules when present."""
        oracle = MockOracleBackend(self.scene)
        if self.decoys:
            return DecoyBackend(oracle, self.decoys)
        return oracle


def _place_entities(rng: np.random.Generator, params: SceneParams) -> list[SceneEntity]:
    """Place non-overlapping entities with a 1-pixel gap, back to front."""
    count = int(rng.integers(params.min_entities, params.max_entities + 1))
    class_pool = rng.permutation(params.num_classes - 1) + 1
    occupied = np.zeros((params.height, params.width), dtype=bool)
    entities: list[SceneEntity] = []
    for index in range(count):
        placed = False
        for _ in range(1000):
            shape = "rect" if rng.integers(2) == 0 else "circle"
            if shape == "rect":
                ext_h = int(rng.integers(params.min_entity_size, params.max_entity_size + 1))
                ext_w = int(rng.integers(params.min_entity_size, params.max_entity_size + 1))
                if ext_h > params.height or ext_w > params.width:
                    continue
                top = int(rng.integers(0, params.height - ext_h + 1))
                left = int(rng.integers(0, params.width - ext_w + 1))
                geometry = (top, left, ext_h, ext_w)
                bbox = (top, left, ext_h, ext_w)
            else:
                radius = int(rng.integers(params.min_entity_size, params.max_entity_size + 1)) // 2
                row = int(rng.integers(radius, params.height - radius))
                col = int(rng.integers(radius, params.width - radius))
                geometry = (row, col, radius)
                bbox = (row - radius, col - radius, 2 * radius + 1, 2 * radius + 1)
            top, left, ext_h, ext_w = bbox
            r0 = max(top - 1, 0)
            c0 = max(left - 1, 0)
            r1 = min(top + ext_h + 1, params.height)
            c1 = min(left + ext_w + 1, params.width)
            if occupied[r0:r1, c0:c1].any():
                continue
            occupied[top : top + ext_h, left : left + ext_w] = True
            cls = int(class_pool[index % len(class_pool)])
            entities.append(
                SceneEntity(shape, geometry, cls, depth=index, score=params.entity_score)
            )
            placed = True
            break
        if not placed:
            break
    if len(entities) < params.min_entities:
        raise ValueError(
            f"could only place {len(entities)} of {params.min_entities} entities "
            f"in a {params.height}x{params.width} scene"
        )
    return entities


def _entity_bbox(entity: SceneEntity) -> tuple[int, int, int, int]:
    """Bounding box (top, left, height, width) of an entity."""
    if entity.shape == "rect":
        return entity.geometry
    row, col, radius = entity.geometry
    return row - radius, col - radius, 2 * radius + 1, 2 * radius + 1


def _carve_zone(
    rng: np.random.Generator, entity: SceneEntity, area: int, params: SceneParams
) -> tuple[int, int, int]:
    """Pick (top, left, side) of a corruption zone inside the entity."""
    if entity.shape == "rect":
        top, left, ext_h, ext_w = entity.geometry
        geom_side = min(ext_h, ext_w)
    else:
        row, col, radius = entity.geometry
        half = int(radius / np.sqrt(2.0))
        top, left = row - half, col - half
        geom_side = 2 * half + 1
    side = min(int(np.sqrt(params.corruption_cap * area)), geom_side)
    if side < params.min_zone_side:
        raise ValueError(
            f"cannot carve a {params.min_zone_side}-pixel corruption zone into an "
            f"entity of area {area} under cap {params.corruption_cap}"
        )
    if entity.shape == "rect":
        ext_h, ext_w = entity.geometry[2], entity.geometry[3]
        zone_top = top + int(rng.integers(0, ext_h - side + 1))
        zone_left = left + int(rng.integers(0, ext_w - side + 1))
    else:
        zone_top = top + int(rng.integers(0, geom_side - side + 1))
        zone_left = left + int(rng.integers(0, geom_side - side + 1))
    return zone_top, zone_left, side


def _grown_decoy(
    base_labels: np.ndarray,
    bbox: tuple[int, int, int, int],
    params: SceneParams,
    *,
    oversized: bool,
    start_margin: int,
) -> BinaryMask:
    """Expand a bounding box until the mask has background majority and the
    wanted side of the area bound.  Oversized decoys must exceed the bound,
    others must stay within it."""
    height, width = base_labels.shape
    top, left, ext_h, ext_w = bbox
    for margin in range(start_margin, max(height, width)):
        r0, c0 = max(top - margin, 0), max(left - margin, 0)
        r1, c1 = min(top + ext_h + margin, height), min(left + ext_w + margin, width)
        bits = np.zeros((height, width), dtype=bool)
        bits[r0:r1, c0:c1] = True
        area = int(bits.sum())
        counts = np.bincount(base_labels[bits])
        if int(counts.argmax()) != 0:
            continue
        if oversized and area > params.beta_hint:
            return BinaryMask(bits)
        if not oversized:
            if area > params.beta_hint:
                break
            return BinaryMask(bits)
    kind = "oversized" if oversized else "bounded"
    raise ValueError(f"cannot grow a {kind} background-majority decoy from bbox {bbox}")


def _build_decoys(
    rng: np.random.Generator,
    scene: SceneSpec,
    base_labels: np.ndarray,
    zones: list[CorruptionZone],
    params: SceneParams,
) -> tuple[DecoyRule, ...]:
    """One oversized, one low-confidence, and one sort-order decoy."""
    order = rng.permutation(len(scene.entities))
    targets = [int(order[i % len(order)]) for i in range(3)]
    zone_by_entity = {z.entity_index: z for z in zones}
    rules = []
    for kind, target in zip(("oversized", "low", "sort"), targets):
        zone = zone_by_entity[target]
        trigger = (zone.top, zone.left, zone.top + zone.side - 1, zone.left + zone.side - 1)
        bbox = _entity_bbox(scene.entities[target])
        if kind == "oversized":
            mask = _grown_decoy(base_labels, bbox, params, oversized=True, start_margin=2)
            score = OVERSIZED_DECOY_SCORE
        elif kind == "low":
            top, left, ext_h, ext_w = bbox
            half = (top, left, ext_h, max(ext_w // 2, 1))
            mask = _grown_decoy(base_labels, half, params, oversized=False, start_margin=2)
            score = LOW_DECOY_SCORE
        else:
            mask = _grown_decoy(base_labels, bbox, params, oversized=False, start_margin=2)
            score = SORT_DECOY_SCORE
        rules.append(DecoyRule(trigger, mask, score, ATTACH_LAST))
    return tuple(rules)


def generate_scene(seed: int, params: SceneParams = SceneParams()) -> SyntheticScene:
    """Generate a seeded scene with corrupted base probabilities.

    The base prediction (argmax) is exact outside corruption zones when
    ``noise_level`` is 0 and wrong inside every zone; zone pixels carry enough
    entropy to attract anchors at the default window and threshold.
    """
    rng = np.random.default_rng(seed)
    entities = _place_entities(rng, params)
    scene = SceneSpec(params.height, params.width, params.num_classes, tuple(entities))
    ownership = rasterize_ownership(scene)
    labels = np.zeros((params.height, params.width), dtype=np.uint8)
    for i, entity in enumerate(scene.entities):
        labels[ownership == i] = entity.cls
    truth = ClassMap(labels)

    n = params.num_classes
    one_hot = np.eye(n, dtype=np.float64)[labels]
    uniform = np.full((params.height, params.width, n), 1.0 / n, dtype=np.float64)
    prob = (1.0 - params.noise_level) * one_hot + params.noise_level * uniform

    zones = []
    for i, entity in enumerate(scene.entities):
        area = int((ownership == i).sum())
        zone_top, zone_left, side = _carve_zone(rng, entity, area, params)
        wrong = int(rng.integers(0, n - 1))
        if wrong >= entity.cls:
            wrong += 1
        wrong_hot = np.zeros(n, dtype=np.float64)
        wrong_hot[wrong] = 1.0
        mix = (1.0 - params.corruption_mix) * wrong_hot + params.corruption_mix / n
        prob[zone_top : zone_top + side, zone_left : zone_left + side, :] = mix
        zones.append(CorruptionZone(i, zone_top, zone_left, side, wrong))

    pmap = ProbabilityMap(prob.astype(np.float32))
    decoys: tuple[DecoyRule, ...] = ()
    if params.with_decoys:
        base_labels = np.argmax(pmap.data, axis=2).astype(np.uint8)
        decoys = _build_decoys(rng, scene, base_labels, zones, params)
    return SyntheticScene(scene, truth, pmap, tuple(zones), decoys)


# ---------------------------------------------------------------------------
# Ablation harness
# ---------------------------------------------------------------------------


def default_ablation_rows(alpha: float, beta: int) -> list[tuple[str, FusionParams]]:
    """The four standard rows: base, prompting only, +filter, +filter+sort."""
    return [
        ("base", FusionParams(alpha, beta, enhance=False, use_filter=False, use_sort=False)),
        ("enhance", FusionParams(alpha, beta, enhance=True, use_filter=False, use_sort=False)),
        ("enhance+filter", FusionParams(alpha, beta, enhance=True, use_filter=True, use_sort=False)),
        ("enhance+filter+sort", FusionParams(alpha, beta, enhance=True, use_filter=True, use_sort=True)),
    ]


def run_ablation(
    scenes: list[SyntheticScene],
    rows: list[tuple[str, FusionParams]],
    filter_params: FilterParams,
    k: int,
    seed: int,
    ignore_label: int | None = None,
) -> list[EvalReport]:
    """Refine every scene under each toggle row and aggregate IoU per row.

    Every report echoes the full effective configuration, including the row
    label and toggle states.
    """
    if not scenes:
        raise ValueError("ablation needs at least one scene")
    n = scenes[0].scene.num_classes
    if any(s.scene.num_classes != n for s in scenes):
        raise ValueError("all ablation scenes must share one class count")
    reports = []
    for label, fusion_params in rows:
        total = ConfusionMatrix(np.zeros((n, n), dtype=np.int64))
        for scene in scenes:
            refined = refine(
                scene.base_prediction(),
                scene.prob,
                filter_params,
                fusion_params,
                k,
                seed,
                scene.backend(),
            )
            total = total + accumulate_confusion(refined, scene.truth, n, ignore_label)
        config = {
            "label": label,
            "w": filter_params.w,
            "tau": filter_params.tau,
            "alpha": fusion_params.alpha,
            "beta": fusion_params.beta,
            "k": k,
            "seed": seed,
            "enhance": fusion_params.enhance,
            "use_filter": fusion_params.use_filter,
            "use_sort": fusion_params.use_sort,
            "ignore_label": ignore_label,
        }
        reports.append(EvalReport.from_confusion(total, config))
    return reports


def ablation_table_text(reports: list[EvalReport]) -> str:
    """Aligned plain-text table of row label, toggles, and mean IoU."""
    rows = []
    for report in reports:
        cfg = report.config
        rows.append(
            (
                str(cfg.get("label", "?")),
                "on" if cfg.get("enhance") else "off",
                "on" if cfg.get("use_filter") else "off",
                "on" if cfg.get("use_sort") else "off",
                f"{report.miou:.6f}",
            )
        )
    headers = ("row", "enhance", "filter", "sort", "miou")
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i])
        for i in range(5)
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * widths[i] for i in range(5)),
    ]
    for r in rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(5)))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Scene bundle serialization
# ---------------------------------------------------------------------------


def scene_bundle_to_json(scene: SyntheticScene) -> dict:
    """Scene geometry plus decoy rules as a JSON-ready dict (no pixel data)."""
    return {
        "scene": scene_to_json(scene.scene),
        "corruptions": [
            {
                "entity_index": z.entity_index,
                "top": z.top,
                "left": z.left,
                "side": z.side,
                "wrong_cls": z.wrong_cls,
            }
            for z in scene.corruptions
        ],
        "decoys": [
            {
                "zone": list(rule.zone),
                "score": rule.score,
                "attach": rule.attach,
                "rle": rle_encode(rule.mask).to_json_dict(),
            }
            for rule in scene.decoys
        ],
    }


def scene_bundle_from_json(obj: dict) -> tuple[SceneSpec, tuple[DecoyRule, ...]]:
    """Parse scene geometry and decoy rules from a bundle dict."""
    if not isinstance(obj, dict) or "scene" not in obj:
        raise ValueError("scene bundle JSON must be an object with a 'scene' key")
    scene = scene_from_json(obj["scene"])
    decoys = []
    for n, entry in enumerate(obj.get("decoys", [])):
        try:
            rle = RunLengthEncoding.from_json_dict(entry["rle"])
            decoys.append(
                DecoyRule(
                    tuple(entry["zone"]),
                    rle_decode(rle),
                    float(entry["score"]),
                    str(entry.get("attach", ATTACH_LAST)),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"decoy rule {n} is malformed: {exc}") from exc
    return scene, tuple(decoys)


def build_scene_backend(
    scene: SceneSpec, decoys: tuple[DecoyRule, ...] = ()
) -> SegmenterBackend:
    """Oracle backend for a scene, with decoy rules when given."""
    oracle = MockOracleBackend(scene)
    if decoys:
        return DecoyBackend(oracle, decoys)
    return oracle
