"""Synthetic scenes, decoy rules, and the ablation harness."""
from __future__ import annotations

import numpy as np
import pytest

from anchor_refine import (
    Anchor,
    BinaryMask,
    CandidateMask,
    DecoyBackend,
    DecoyRule,
    FilterParams,
    FusionParams,
    MockOracleBackend,
    SceneEntity,
    SceneParams,
    SceneSpec,
    SegmentationOutcome,
    SegmenterRequest,
    ablation_table_text,
    accumulate_confusion,
    compute_entropy,
    default_ablation_rows,
    generate_scene,
    mean_iou,
    region_filter,
    run_ablation,
    scene_bundle_from_json,
    scene_bundle_to_json,
)

import anchor_refine


def test_generate_scene_is_seed_deterministic() -> None:
    params = SceneParams(with_decoys=True)
    a = generate_scene(5, params)
    b = generate_scene(5, params)
    assert a.scene == b.scene
    assert np.array_equal(a.truth.labels, b.truth.labels)
    assert a.prob.data.tobytes() == b.prob.data.tobytes()
    assert len(a.decoys) == len(b.decoys)
    for x, y in zip(a.decoys, b.decoys):
        assert x.zone == y.zone
        assert x.score == y.score
        assert np.array_equal(x.mask.bits, y.mask.bits)
    c = generate_scene(6, params)
    assert not np.array_equal(c.truth.labels, a.truth.labels)


def test_base_prediction_is_wrong_exactly_inside_zones() -> None:
    scene = generate_scene(1, SceneParams())
    pred = scene.base_prediction().labels
    truth = scene.truth.labels
    zone_bits = np.zeros_like(truth, dtype=bool)
    for z in scene.corruptions:
        zone_bits[z.top : z.top + z.side, z.left : z.left + z.side] = True
        zone_pred = pred[z.top : z.top + z.side, z.left : z.left + z.side]
        assert (zone_pred == z.wrong_cls).all()
    assert (pred[~zone_bits] == truth[~zone_bits]).all()
    assert (pred[zone_bits] != truth[zone_bits]).all()


def test_zone_sizes_respect_cap_and_minimum() -> None:
    for seed in range(5):
        scene = generate_scene(seed, SceneParams())
        ownership = anchor_refine.rasterize_ownership(scene.scene)
        for z in scene.corruptions:
            area = int((ownership == z.entity_index).sum())
            assert z.side >= 7
            assert z.side * z.side <= 0.45 * area + 1e-9


def test_every_zone_attracts_anchors_at_default_params() -> None:
    scene = generate_scene(2, SceneParams())
    emap = compute_entropy(scene.prob)
    region = region_filter(emap, FilterParams())
    for z in scene.corruptions:
        zone = region.bits[z.top : z.top + z.side, z.left : z.left + z.side]
        assert zone.any()


def test_decoys_have_the_designed_shapes() -> None:
    params = SceneParams(with_decoys=True)
    scene = generate_scene(3, params)
    assert len(scene.decoys) == 3
    oversized, low, sort_decoy = scene.decoys
    assert oversized.score == 0.9 and oversized.mask.area > params.beta_hint
    assert low.score == 0.3 and low.mask.area <= params.beta_hint
    assert sort_decoy.score == 0.95 and sort_decoy.mask.area <= params.beta_hint
    base = scene.base_prediction().labels
    # the oversized and sort decoys carry background majority over the base
    for rule in (oversized, sort_decoy):
        covered = base[rule.mask.bits]
        assert int(np.bincount(covered).argmax()) == 0


def test_decoy_backend_appends_at_last_matching_anchor() -> None:
    scene = SceneSpec(
        8, 8, 3, (SceneEntity("rect", (0, 0, 3, 3), cls=1, depth=0, score=0.9),)
    )
    bits = np.zeros((8, 8), dtype=bool)
    bits[5:, 5:] = True
    rule = DecoyRule((0, 0, 2, 2), BinaryMask(bits), 0.5)
    backend = DecoyBackend(MockOracleBackend(scene), (rule,))
    request = SegmenterRequest(
        "s", 8, 8, (Anchor(0, 0), Anchor(6, 6), Anchor(2, 2), Anchor(7, 7))
    )
    outcome = backend.segment(request)
    # anchors 0 and 2 hit the entity (and the rule zone); the rule attaches at
    # anchor 2, after the entity mask for that anchor
    kinds = [(m.anchor_index, round(m.score, 2)) for m in outcome.masks]
    assert kinds == [(0, 0.9), (2, 0.9), (2, 0.5)]


def test_decoy_backend_attach_first() -> None:
    scene = SceneSpec(
        8, 8, 3, (SceneEntity("rect", (0, 0, 3, 3), cls=1, depth=0, score=0.9),)
    )
    bits = np.zeros((8, 8), dtype=bool)
    bits[5:, 5:] = True
    rule = DecoyRule((0, 0, 2, 2), BinaryMask(bits), 0.5, attach="first")
    backend = DecoyBackend(MockOracleBackend(scene), (rule,))
    request = SegmenterRequest("s", 8, 8, (Anchor(0, 0), Anchor(2, 2)))
    outcome = backend.segment(request)
    kinds = [(m.anchor_index, round(m.score, 2)) for m in outcome.masks]
    assert kinds == [(0, 0.9), (0, 0.5), (1, 0.9)]


def test_decoy_rule_validation() -> None:
    bits = BinaryMask(np.ones((2, 2), dtype=bool))
    with pytest.raises(ValueError):
        DecoyRule((2, 0, 1, 1), bits, 0.5)
    with pytest.raises(ValueError):
        DecoyRule((0, 0, 1, 1), bits, 1.5)
    with pytest.raises(ValueError):
        DecoyRule((0, 0, 1, 1), bits, 0.5, attach="middle")


def test_scene_bundle_round_trip() -> None:
    scene = generate_scene(4, SceneParams(with_decoys=True))
    obj = scene_bundle_to_json(scene)
    spec, decoys = scene_bundle_from_json(obj)
    assert spec == scene.scene
    assert len(decoys) == len(scene.decoys)
    for loaded, original in zip(decoys, scene.decoys):
        assert loaded.zone == original.zone
        assert loaded.score == original.score
        assert loaded.attach == original.attach
        assert np.array_equal(loaded.mask.bits, original.mask.bits)


def test_refinement_repairs_corrupted_scene_fully() -> None:
    scene = generate_scene(8, SceneParams())
    refined = anchor_refine.refine(
        scene.base_prediction(),
        scene.prob,
        FilterParams(),
        FusionParams(beta=1100),
        1000,
        0,
        scene.backend(),
    )
    assert np.array_equal(refined.labels, scene.truth.labels)


def test_run_ablation_reports_and_table() -> None:
    params = SceneParams(with_decoys=True)
    scenes = [generate_scene(seed, params) for seed in range(3)]
    rows = default_ablation_rows(0.7, params.beta_hint)
    reports = run_ablation(scenes, rows, FilterParams(), 1000, 0)
    assert [r.config["label"] for r in reports] == [
        "base", "enhance", "enhance+filter", "enhance+filter+sort",
    ]
    for report in reports:
        assert report.config["w"] == 5
        assert report.config["tau"] == 1.0
        assert report.config["alpha"] == 0.7
        assert report.config["beta"] == params.beta_hint
        assert report.config["k"] == 1000
        assert report.config["seed"] == 0
        assert 0.0 <= report.miou <= 1.0
    # enhance-off equals the raw base prediction exactly
    n = scenes[0].scene.num_classes
    total = None
    for s in scenes:
        cm = accumulate_confusion(s.base_prediction(), s.truth, n)
        total = cm if total is None else total + cm
    assert reports[0].miou == mean_iou(total)
    table = ablation_table_text(reports)
    lines = table.strip().splitlines()
    assert len(lines) == 6
    assert lines[0].split() == ["row", "enhance", "filter", "sort", "miou"]
    assert "enhance+filter+sort" in lines[-1]


def test_scene_params_validation() -> None:
    with pytest.raises(ValueError):
        SceneParams(min_entities=5, max_entities=3)
    with pytest.raises(ValueError):
        SceneParams(height=10, width=10, max_entity_size=20)
    with pytest.raises(ValueError):
        SceneParams(num_classes=1)
    with pytest.raises(ValueError):
        SceneParams(corruption_mix=1.5)
