"""Promptable-segmenter backends: manifest replay, geometric scene oracle, HTTP client.

All backends answer a batch of anchor prompts with candidate masks.  Results
are ordered by ascending anchor index; masks for one anchor keep the backend's
own stable order.  Backends hold no mutable state after construction, so
concurrent segment() calls are safe.
"""
from __future__ import annotations

import json
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .entropy import Anchor
from .formats import FormatError, load_binary_mask
from .tensor import BinaryMask, RunLengthEncoding, rle_decode

RECT = "rect"
CIRCLE = "circle"


class SegmenterError(Exception):
    """Base class for backend failures."""


class SegmenterConnectionError(SegmenterError):
    """The backend endpoint could not be reached."""


class SegmenterHTTPError(SegmenterError):
    """The backend answered with a non-success HTTP status."""

    def __init__(self, status: int, message: str) -> None:
        super().__init__(message)
        self.status = status


class SegmenterProtocolError(SegmenterError):
    """The backend answered with a malformed or invariant-violating payload."""


class BackendRequestError(SegmenterError):
    """The request is incompatible with the backend (e.g. dimension mismatch)."""


class ManifestError(ValueError):
    """A mask manifest file is malformed or references missing data."""


@dataclass(frozen=True)
class CandidateMask:
    """One mask hypothesis returned for an anchor prompt."""

    mask: BinaryMask
    score: float
    anchor_index: int
    area: int = field(init=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"mask score must lie in [0, 1], got {self.score}")
        if self.anchor_index < 0:
            raise ValueError(f"anchor index must be non-negative, got {self.anchor_index}")
        object.__setattr__(self, "area", self.mask.area)


@dataclass(frozen=True)
class SegmenterRequest:
    """A batch of anchor prompts against one image."""

    image_id: str
    height: int
    width: int
    anchors: tuple[Anchor, ...]

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError(f"image dimensions must be positive, got {self.height}x{self.width}")
        object.__setattr__(self, "anchors", tuple(self.anchors))
        for i, anchor in enumerate(self.anchors):
            if not (0 <= anchor.row < self.height and 0 <= anchor.col < self.width):
                raise ValueError(
                    f"anchor {i} at ({anchor.row}, {anchor.col}) is outside "
                    f"{self.height}x{self.width}"
                )


@dataclass(frozen=True)
class AnchorFailure:
    """A per-anchor soft failure the pipeline may log and skip."""

    anchor_index: int
    message: str


@dataclass(frozen=True)
class SegmentationOutcome:
    """Masks (ascending anchor index) plus any per-anchor soft failures."""

    masks: tuple[CandidateMask, ...]
    failures: tuple[AnchorFailure, ...] = ()


class SegmenterBackend(Protocol):
    def segment(self, request: SegmenterRequest) -> SegmentationOutcome: ...


# ---------------------------------------------------------------------------
# Manifest replay
# ---------------------------------------------------------------------------


class ManifestBackend:
    """Replays recorded masks keyed by exact prompt coordinates.

    Anchors with no manifest entry yield no masks.  All mask files are loaded
    and validated eagerly at construction time.
    """

    def __init__(
        self,
        image_id: str,
        height: int,
        width: int,
        entries: dict[tuple[int, int], list[tuple[float, BinaryMask]]],
    ) -> None:
        self.image_id = image_id
        self.height = height
        self.width = width
        self._entries = entries

    def segment(self, request: SegmenterRequest) -> SegmentationOutcome:
        if (request.height, request.width) != (self.height, self.width):
            raise BackendRequestError(
                f"manifest image is {self.height}x{self.width} but request is "
                f"{request.height}x{request.width}"
            )
        masks = []
        for i, anchor in enumerate(request.anchors):
            for score, mask in self._entries.get((anchor.row, anchor.col), []):
                masks.append(CandidateMask(mask, score, i))
        return SegmentationOutcome(tuple(masks))


def load_manifest_backend(path: str | Path) -> ManifestBackend:
    """Build a replay backend from a manifest JSON file.

    The manifest holds ``image_id``, ``height``, ``width`` and an ``entries``
    array of ``{"anchor": [row, col], "score": s, "mask_path": p}`` records;
    mask paths are resolved relative to the manifest file and must point to
    existing PGM masks with matching dimensions.
    """
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    for key in ("image_id", "height", "width", "entries"):
        if key not in obj:
            raise ManifestError(f"{path}: missing manifest key {key!r}")
    image_id = obj["image_id"]
    height, width = obj["height"], obj["width"]
    if not isinstance(image_id, str):
        raise ManifestError(f"{path}: image_id must be a string")
    if not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in (height, width)):
        raise ManifestError(f"{path}: height/width must be positive integers")
    if not isinstance(obj["entries"], list):
        raise ManifestError(f"{path}: entries must be an array")
    entries: dict[tuple[int, int], list[tuple[float, BinaryMask]]] = {}
    for n, entry in enumerate(obj["entries"]):
        if not isinstance(entry, dict) or not {"anchor", "score", "mask_path"} <= set(entry):
            raise ManifestError(f"{path}: entry {n} must have anchor, score, and mask_path")
        anchor = entry["anchor"]
        if (
            not isinstance(anchor, list)
            or len(anchor) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in anchor)
        ):
            raise ManifestError(f"{path}: entry {n} anchor must be a [row, col] integer pair")
        row, col = anchor
        if not (0 <= row < height and 0 <= col < width):
            raise ManifestError(f"{path}: entry {n} anchor ({row}, {col}) is out of bounds")
        score = entry["score"]
        if not isinstance(score, (int, float)) or isinstance(score, bool) or not 0 <= score <= 1:
            raise ManifestError(f"{path}: entry {n} score must be a number in [0, 1]")
        mask_path = path.parent / entry["mask_path"]
        if not mask_path.is_file():
            raise ManifestError(f"{path}: entry {n} references missing mask file {mask_path}")
        try:
            mask = load_binary_mask(mask_path)
        except FormatError as exc:
            raise ManifestError(f"{path}: entry {n}: {exc}") from exc
        if (mask.height, mask.width) != (height, width):
            raise ManifestError(
                f"{path}: entry {n} mask is {mask.height}x{mask.width}, "
                f"expected {height}x{width}"
            )
        entries.setdefault((row, col), []).append((float(score), mask))
    return ManifestBackend(image_id, height, width, entries)


# ---------------------------------------------------------------------------
# Geometric scene oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneEntity:
    """An axis-aligned rectangle or filled circle with class, depth, and score.

    Rect geometry is (top, left, height, width); circle geometry is
    (row, col, radius).  Larger depth means closer to the camera.
    """

    shape: str
    geometry: tuple[int, ...]
    cls: int
    depth: int
    score: float

    def __post_init__(self) -> None:
        if self.shape not in (RECT, CIRCLE):
            raise ValueError(f"entity shape must be '{RECT}' or '{CIRCLE}', got {self.shape!r}")
        geometry = tuple(int(v) for v in self.geometry)
        arity = 4 if self.shape == RECT else 3
        if len(geometry) != arity:
            raise ValueError(f"{self.shape} geometry needs {arity} integers, got {geometry}")
        if self.shape == RECT and (geometry[2] < 1 or geometry[3] < 1):
            raise ValueError(f"rect extent must be positive, got {geometry}")
        if self.shape == CIRCLE and geometry[2] < 1:
            raise ValueError(f"circle radius must be positive, got {geometry}")
        if self.cls < 0:
            raise ValueError(f"entity class must be non-negative, got {self.cls}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"entity score must lie in [0, 1], got {self.score}")
        object.__setattr__(self, "geometry", geometry)

    def rasterize(self, height: int, width: int) -> np.ndarray:
        """Boolean (height, width) footprint of this entity."""
        bits = np.zeros((height, width), dtype=bool)
        if self.shape == RECT:
            top, left, ext_h, ext_w = self.geometry
            bits[top : top + ext_h, left : left + ext_w] = True
        else:
            row, col, radius = self.geometry
            rr, cc = np.ogrid[:height, :width]
            bits = (rr - row) ** 2 + (cc - col) ** 2 <= radius * radius
        return bits

    def fits(self, height: int, width: int) -> bool:
        if self.shape == RECT:
            top, left, ext_h, ext_w = self.geometry
            return 0 <= top and 0 <= left and top + ext_h <= height and left + ext_w <= width
        row, col, radius = self.geometry
        return (
            radius <= row < height - radius and radius <= col < width - radius
        )


@dataclass(frozen=True)
class SceneSpec:
    """A synthetic image: dimensions, class count, and depth-ordered entities."""

    height: int
    width: int
    num_classes: int
    entities: tuple[SceneEntity, ...]

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError(f"scene dimensions must be positive, got {self.height}x{self.width}")
        if self.num_classes < 2:
            raise ValueError(f"scene needs at least 2 classes, got {self.num_classes}")
        entities = tuple(self.entities)
        depths = [e.depth for e in entities]
        if len(set(depths)) != len(depths):
            raise ValueError("entity depths must be distinct")
        for n, entity in enumerate(entities):
            if entity.cls >= self.num_classes:
                raise ValueError(f"entity {n} class {entity.cls} >= {self.num_classes}")
            if not entity.fits(self.height, self.width):
                raise ValueError(f"entity {n} does not fit a {self.height}x{self.width} scene")
        object.__setattr__(self, "entities", entities)


def rasterize_ownership(scene: SceneSpec) -> np.ndarray:
    """Per-pixel index of the front-most entity covering it, -1 for background.

    Entities are painted back to front, so on contested pixels the entity with
    the larger depth wins.
    """
    owner = np.full((scene.height, scene.width), -1, dtype=np.int32)
    order = sorted(range(len(scene.entities)), key=lambda i: scene.entities[i].depth)
    for i in order:
        owner[scene.entities[i].rasterize(scene.height, scene.width)] = i
    return owner


class MockOracleBackend:
    """Deterministic oracle: each anchor yields its entity's visible region.

    The visible region is the set of pixels the anchor's entity owns after
    depth resolution.  Background anchors yield no masks.
    """

    def __init__(self, scene: SceneSpec) -> None:
        self.scene = scene
        self._ownership = rasterize_ownership(scene)
        self._visible = [
            BinaryMask(self._ownership == i) for i in range(len(scene.entities))
        ]

    def segment(self, request: SegmenterRequest) -> SegmentationOutcome:
        if (request.height, request.width) != (self.scene.height, self.scene.width):
            raise BackendRequestError(
                f"scene is {self.scene.height}x{self.scene.width} but request is "
                f"{request.height}x{request.width}"
            )
        masks = []
        for i, anchor in enumerate(request.anchors):
            owner = int(self._ownership[anchor.row, anchor.col])
            if owner < 0:
                continue
            masks.append(CandidateMask(self._visible[owner], self.scene.entities[owner].score, i))
        return SegmentationOutcome(tuple(masks))


def scene_to_json(scene: SceneSpec) -> dict:
    """Scene as a JSON-ready dict."""
    return {
        "height": scene.height,
        "width": scene.width,
        "num_classes": scene.num_classes,
        "entities": [
            {
                "shape": e.shape,
                "geometry": list(e.geometry),
                "cls": e.cls,
                "depth": e.depth,
                "score": e.score,
            }
            for e in scene.entities
        ],
    }


def scene_from_json(obj: dict) -> SceneSpec:
    """Parse a scene dict, surfacing invariant violations as ValueError."""
    if not isinstance(obj, dict):
        raise ValueError("scene JSON must be an object")
    for key in ("height", "width", "num_classes", "entities"):
        if key not in obj:
            raise ValueError(f"scene JSON missing key {key!r}")
    entities = []
    for n, entry in enumerate(obj["entities"]):
        try:
            entities.append(
                SceneEntity(
                    shape=entry["shape"],
                    geometry=tuple(entry["geometry"]),
                    cls=int(entry["cls"]),
                    depth=int(entry["depth"]),
                    score=float(entry["score"]),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"scene entity {n} is malformed: {exc}") from exc
    return SceneSpec(int(obj["height"]), int(obj["width"]), int(obj["num_classes"]), tuple(entities))


# ---------------------------------------------------------------------------
# HTTP client
# ---------------------------------------------------------------------------


class HttpBackend:
    """Client for the POST {endpoint}/v1/segment mask-serving protocol.

    Anchors may be batched into chunks issued concurrently; the merged result
    order always matches a sequential run.  Failures are typed: connection
    errors, HTTP status errors, and protocol violations, each naming the
    anchor batch involved.
    """

    def __init__(
        self,
        endpoint: str,
        chunk_size: int | None = None,
        max_workers: int = 4,
        timeout: float = 30.0,
    ) -> None:
        if chunk_size is not None and chunk_size < 1:
            raise ValueError(f"chunk size must be positive, got {chunk_size}")
        if max_workers < 1:
            raise ValueError(f"worker count must be positive, got {max_workers}")
        self.endpoint = endpoint.rstrip("/")
        self.chunk_size = chunk_size
        self.max_workers = max_workers
        self.timeout = timeout

    def segment(self, request: SegmenterRequest) -> SegmentationOutcome:
        total = len(request.anchors)
        size = self.chunk_size if self.chunk_size is not None else max(total, 1)
        spans = [(start, min(start + size, total)) for start in range(0, total, size)]
        if len(spans) <= 1 or self.max_workers == 1:
            chunk_masks = [self._segment_chunk(request, span) for span in spans]
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                chunk_masks = list(pool.map(lambda span: self._segment_chunk(request, span), spans))
        masks = [mask for chunk in chunk_masks for mask in chunk]
        return SegmentationOutcome(tuple(masks))

    def _segment_chunk(
        self, request: SegmenterRequest, span: tuple[int, int]
    ) -> list[CandidateMask]:
        start, stop = span
        batch = f"anchors[{start}:{stop}]"
        payload = json.dumps(
            {
                "image_id": request.image_id,
                "height": request.height,
                "width": request.width,
                "points": [[a.row, a.col] for a in request.anchors[start:stop]],
            }
        ).encode()
        http_request = urllib.request.Request(
            self.endpoint + "/v1/segment",
            data=payload,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(http_request, timeout=self.timeout) as response:
                body = response.read()
        except urllib.error.HTTPError as exc:
            detail = self._error_detail(exc)
            raise SegmenterHTTPError(
                exc.code, f"{batch}: server returned {exc.code}: {detail}"
            ) from exc
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            reason = getattr(exc, "reason", exc)
            raise SegmenterConnectionError(f"{batch}: {reason}") from exc
        return self._parse_chunk(body, request, start, stop, batch)

    @staticmethod
    def _error_detail(exc: urllib.error.HTTPError) -> str:
        try:
            obj = json.loads(exc.read())
            if isinstance(obj, dict) and isinstance(obj.get("error"), str):
                return obj["error"]
        except (ValueError, OSError):
            pass
        return exc.reason if isinstance(exc.reason, str) else "unknown error"

    def _parse_chunk(
        self, body: bytes, request: SegmenterRequest, start: int, stop: int, batch: str
    ) -> list[CandidateMask]:
        try:
            obj = json.loads(body)
        except json.JSONDecodeError as exc:
            raise SegmenterProtocolError(f"{batch}: response is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict) or not isinstance(obj.get("results"), list):
            raise SegmenterProtocolError(f"{batch}: response must hold a 'results' array")
        buckets: dict[int, list[CandidateMask]] = {}
        for result in obj["results"]:
            if not isinstance(result, dict):
                raise SegmenterProtocolError(f"{batch}: result entries must be objects")
            point = result.get("point_index")
            if not isinstance(point, int) or isinstance(point, bool) or not (
                0 <= point < stop - start
            ):
                raise SegmenterProtocolError(f"{batch}: bad point_index {point!r}")
            hypotheses = result.get("masks")
            if not isinstance(hypotheses, list):
                raise SegmenterProtocolError(f"{batch}: result masks must be an array")
            for hypothesis in hypotheses:
                buckets.setdefault(point, []).append(
                    self._parse_mask(hypothesis, request, start + point, batch)
                )
        return [mask for point in sorted(buckets) for mask in buckets[point]]

    @staticmethod
    def _parse_mask(
        hypothesis: object, request: SegmenterRequest, anchor_index: int, batch: str
    ) -> CandidateMask:
        if not isinstance(hypothesis, dict):
            raise SegmenterProtocolError(f"{batch}: mask entries must be objects")
        score = hypothesis.get("score")
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise SegmenterProtocolError(f"{batch}: mask score must be a number")
        try:
            rle = RunLengthEncoding.from_json_dict(hypothesis.get("rle"))
        except ValueError as exc:
            raise SegmenterProtocolError(f"{batch}: bad mask encoding: {exc}") from exc
        if (rle.height, rle.width) != (request.height, request.width):
            raise SegmenterProtocolError(
                f"{batch}: mask size {rle.height}x{rle.width} does not match image "
                f"{request.height}x{request.width}"
            )
        try:
            return CandidateMask(rle_decode(rle), float(score), anchor_index)
        except ValueError as exc:
            raise SegmenterProtocolError(f"{batch}: {exc}") from exc
