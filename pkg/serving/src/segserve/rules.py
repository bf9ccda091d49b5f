"""Per-image stub rules: rectangular zones that answer point prompts.

A rules file is a JSON object {"height": H, "width": W, "rules": [...]} where
each rule maps an inclusive rectangular zone to one returned mask:

    {"zone": [top, left, bottom, right],
     "score": 0.9,
     "rle": {"size": [H, W], "counts": [...]}}

RLE counts alternate runs of 0s and 1s over the row-major flattening and
start with a zero run.  A prompt point collects the masks of every rule whose
zone contains it, in file order; points outside all zones get none.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class RulesError(ValueError):
    """A rules file or rule value is invalid."""


@dataclass(frozen=True)
class StubRule:
    """One zone with the mask and score it returns.

    Corners are inclusive, so a single-pixel zone has top == bottom and
    left == right.
    """

    top: int
    left: int
    bottom: int
    right: int
    score: float
    counts: tuple[int, ...]

    def contains(self, row: int, col: int) -> bool:
        return self.top <= row <= self.bottom and self.left <= col <= self.right


@dataclass(frozen=True)
class ImageRules:
    """All stub rules for one image, validated against its dimensions."""

    height: int
    width: int
    rules: tuple[StubRule, ...]

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise RulesError(f"image size must be positive, got {self.height}x{self.width}")
        for i, rule in enumerate(self.rules):
            if not (0 <= rule.top <= rule.bottom < self.height):
                raise RulesError(f"rule {i}: rows {rule.top}..{rule.bottom} outside height {self.height}")
            if not (0 <= rule.left <= rule.right < self.width):
                raise RulesError(f"rule {i}: columns {rule.left}..{rule.right} outside width {self.width}")
            if not 0.0 <= rule.score <= 1.0:
                raise RulesError(f"rule {i}: score {rule.score} outside [0, 1]")
            if any(c < 0 for c in rule.counts):
                raise RulesError(f"rule {i}: negative run count")
            total = sum(rule.counts)
            if total != self.height * self.width:
                raise RulesError(
                    f"rule {i}: run counts sum to {total}, "
                    f"expected {self.height * self.width}"
                )


def _int_field(obj: dict, key: str, where: str) -> int:
    value = obj.get(key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise RulesError(f"{where}: {key} must be an integer, got {value!r}")
    return value


def _parse_rule(entry: object, index: int, height: int, width: int) -> StubRule:
    where = f"rule {index}"
    if not isinstance(entry, dict):
        raise RulesError(f"{where}: must be an object")
    zone = entry.get("zone")
    if (
        not isinstance(zone, list)
        or len(zone) != 4
        or any(isinstance(v, bool) or not isinstance(v, int) for v in zone)
    ):
        raise RulesError(f"{where}: zone must be [top, left, bottom, right]")
    score = entry.get("score")
    if not isinstance(score, (int, float)) or isinstance(score, bool):
        raise RulesError(f"{where}: score must be a number, got {score!r}")
    rle = entry.get("rle")
    if not isinstance(rle, dict):
        raise RulesError(f"{where}: rle must be an object")
    size = rle.get("size")
    if size != [height, width]:
        raise RulesError(f"{where}: rle size {size!r} does not match the {height}x{width} image")
    counts = rle.get("counts")
    if not isinstance(counts, list) or any(
        isinstance(c, bool) or not isinstance(c, int) for c in counts
    ):
        raise RulesError(f"{where}: rle counts must be an array of integers")
    return StubRule(zone[0], zone[1], zone[2], zone[3], float(score), tuple(counts))


def parse_image_rules(obj: object, source: str = "rules") -> ImageRules:
    """Validated ImageRules from a parsed JSON object."""
    if not isinstance(obj, dict):
        raise RulesError(f"{source}: top level must be an object")
    height = _int_field(obj, "height", source)
    width = _int_field(obj, "width", source)
    entries = obj.get("rules", [])
    if not isinstance(entries, list):
        raise RulesError(f"{source}: rules must be an array")
    rules = tuple(_parse_rule(e, i, height, width) for i, e in enumerate(entries))
    return ImageRules(height, width, rules)


def load_image_rules(path: str | Path) -> ImageRules:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise RulesError(f"{path}: malformed JSON: {exc}") from exc
    return parse_image_rules(obj, str(path))


def stub_segment(rules: ImageRules, points: list[tuple[int, int]]) -> dict:
    """Protocol response body for the given prompt points.

    A pure function of its inputs: each point gets the masks of all rules
    whose zones contain it, in rule order.
    """
    results = []
    for index, (row, col) in enumerate(points):
        masks = [
            {
                "score": rule.score,
                "rle": {"size": [rules.height, rules.width], "counts": list(rule.counts)},
            }
            for rule in rules.rules
            if rule.contains(row, col)
        ]
        results.append({"point_index": index, "masks": masks})
    return {"results": results}
