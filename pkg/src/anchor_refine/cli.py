"""Command-line interface for the refinement pipeline.

Diagnostics go to standard error; machine-readable output goes to files, which
are written atomically (temp file + rename).  Exit status is 0 on success, 1
on validation errors, and 2 on backend or I/O failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Callable

import numpy as np

from .backends import (
    HttpBackend,
    SegmenterBackend,
    SegmenterError,
    load_manifest_backend,
)
from .config import ConfigError, PipelineConfig, load_config
from .entropy import anchors_to_json, compute_entropy, region_filter, sample_anchors
from .formats import (
    load_binary_mask,
    load_class_map,
    load_entropy_map,
    load_probability_map,
    store_binary_mask,
    store_class_map,
    store_entropy_map,
    store_probability_map,
)
from .fusion import refine
from .metrics import ConfusionMatrix, EvalReport, accumulate_confusion
from .synth import (
    SceneParams,
    ablation_table_text,
    build_scene_backend,
    default_ablation_rows,
    generate_scene,
    run_ablation,
    scene_bundle_from_json,
    scene_bundle_to_json,
)

logger = logging.getLogger("anchor_refine.cli")

# Fixed overlay palette: label -> RGB, reused modulo its length.
_PALETTE = (
    (128, 64, 128), (244, 35, 232), (70, 70, 70), (102, 102, 156),
    (190, 153, 153), (153, 153, 153), (250, 170, 30), (220, 220, 0),
    (107, 142, 35), (152, 251, 152), (70, 130, 180), (220, 20, 60),
    (255, 0, 0), (0, 0, 142), (0, 0, 70), (0, 60, 100),
    (0, 80, 100), (0, 0, 230), (119, 11, 32), (255, 255, 255),
    (255, 170, 0), (0, 255, 170), (170, 0, 255), (128, 128, 0),
)


class _ArgumentParser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with status 1, not 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(f"{path.name}.tmp{os.getpid()}")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def _atomic_store(path: str | Path, store: Callable[[Path], None]) -> None:
    path = Path(path)
    tmp = path.with_name(f"{path.name}.tmp{os.getpid()}")
    try:
        store(tmp)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def _add_config_flags(parser: argparse.ArgumentParser, *, backend: bool = False) -> None:
    group = parser.add_argument_group("pipeline configuration")
    group.add_argument("--config", help="JSON config file (flags take precedence)")
    group.add_argument("--w", type=int, help="box filter window size (odd)")
    group.add_argument("--tau", type=float, help="window mean threshold")
    group.add_argument("--alpha", type=float, help="mask score threshold")
    group.add_argument("--beta", type=int, help="mask area bound")
    group.add_argument("--anchors", type=int, dest="k", help="anchor sample size")
    group.add_argument("--seed", type=int, help="sampling seed")
    group.add_argument(
        "--no-enhance", dest="enhance", action="store_false", default=None,
        help="return the base prediction unchanged",
    )
    group.add_argument(
        "--no-filter", dest="use_filter", action="store_false", default=None,
        help="skip the score/area mask filter",
    )
    group.add_argument(
        "--no-sort", dest="use_sort", action="store_false", default=None,
        help="apply masks in arrival order instead of area order",
    )
    group.add_argument("--ignore-label", type=int, help="truth label excluded from evaluation")
    if backend:
        group.add_argument("--backend", choices=("mock", "manifest", "http"),
                           help="segmenter backend (default mock)")
        group.add_argument("--endpoint", help="http backend base URL")
        group.add_argument("--manifest", help="manifest backend JSON path")
        group.add_argument("--scene", help="mock backend scene bundle JSON path")
        group.add_argument("--image-id", dest="image_id", help="image id sent to the backend")
        group.add_argument("--chunk-size", type=int, dest="chunk_size",
                           help="http backend anchors per request")


_CONFIG_KEYS = (
    "w", "tau", "alpha", "beta", "k", "seed", "enhance", "use_filter", "use_sort",
    "backend", "endpoint", "manifest", "scene", "image_id", "ignore_label", "chunk_size",
)


def _effective_config(args: argparse.Namespace) -> PipelineConfig:
    overrides = {key: getattr(args, key, None) for key in _CONFIG_KEYS}
    return load_config(getattr(args, "config", None), overrides)


def _build_backend(config: PipelineConfig) -> tuple[SegmenterBackend, str]:
    """Backend instance plus the image id to use in requests."""
    if config.backend == "manifest":
        if not config.manifest:
            raise ConfigError("the manifest backend requires --manifest")
        backend = load_manifest_backend(config.manifest)
        return backend, config.image_id or backend.image_id
    if config.backend == "http":
        if not config.endpoint:
            raise ConfigError("the http backend requires --endpoint")
        return HttpBackend(config.endpoint, config.chunk_size), config.image_id or ""
    if not config.scene:
        raise ConfigError("the mock backend requires --scene")
    try:
        bundle = json.loads(Path(config.scene).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config.scene}: malformed JSON: {exc}") from exc
    scene, decoys = scene_bundle_from_json(bundle)
    return build_scene_backend(scene, decoys), config.image_id or ""


def cmd_entropy(args: argparse.Namespace) -> int:
    pmap = load_probability_map(args.prob)
    emap = compute_entropy(pmap)
    _atomic_store(args.out, lambda tmp: store_entropy_map(emap, tmp))
    logger.info("entropy map %dx%d written to %s", emap.height, emap.width, args.out)
    return 0


def cmd_regions(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    emap = load_entropy_map(args.entropy)
    region = region_filter(emap, config.filter_params())
    _atomic_store(args.out, lambda tmp: store_binary_mask(region, tmp))
    logger.info("region mask with %d set pixels written to %s", region.area, args.out)
    return 0


def cmd_anchors(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    region = load_binary_mask(args.region)
    anchors = sample_anchors(region, config.k, config.seed)
    payload = json.dumps(anchors_to_json(anchors), indent=2) + "\n"
    _atomic_write_bytes(args.out, payload.encode())
    logger.info("%d anchors written to %s", len(anchors), args.out)
    return 0


def cmd_refine(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    logger.info("effective config: %s", json.dumps(config.to_dict(), sort_keys=True))
    prediction = load_class_map(args.pred)
    pmap = load_probability_map(args.prob)
    backend, image_id = _build_backend(config)
    refined = refine(
        prediction,
        pmap,
        config.filter_params(),
        config.fusion_params(),
        config.k,
        config.seed,
        backend,
        image_id=image_id,
    )
    _atomic_store(args.out, lambda tmp: store_class_map(refined, tmp))
    logger.info("refined prediction written to %s", args.out)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    if len(args.pred) != len(args.truth):
        raise ConfigError(
            f"{len(args.pred)} prediction files but {len(args.truth)} truth files"
        )
    if args.classes < 1:
        raise ConfigError(f"class count must be positive, got {args.classes}")
    n = args.classes
    total = ConfusionMatrix(np.zeros((n, n), dtype=np.int64))
    for pred_path, truth_path in zip(args.pred, args.truth):
        pred = load_class_map(pred_path)
        truth = load_class_map(truth_path)
        total = total + accumulate_confusion(pred, truth, n, config.ignore_label)
    report = EvalReport.from_confusion(total, {**config.to_dict(), "classes": n})
    payload = json.dumps(report.to_json_dict(), indent=2) + "\n"
    _atomic_write_bytes(args.out, payload.encode())
    logger.info("evaluated %d image(s): miou=%s", len(args.pred), f"{report.miou:.6f}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    params = SceneParams(
        height=args.height,
        width=args.width,
        num_classes=args.classes,
        min_entities=args.min_entities,
        max_entities=args.max_entities,
        noise_level=args.noise,
        with_decoys=args.with_decoys,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = {"params": asdict(params), "seed": args.seed, "scenes": []}
    for i in range(args.count):
        scene = generate_scene(args.seed + i, params)
        stem = f"scene_{i:03d}"
        _atomic_store(out_dir / f"{stem}.truth.pgm",
                      lambda tmp, s=scene: store_class_map(s.truth, tmp))
        _atomic_store(out_dir / f"{stem}.prob.ptm",
                      lambda tmp, s=scene: store_probability_map(s.prob, tmp))
        _atomic_store(out_dir / f"{stem}.pred.pgm",
                      lambda tmp, s=scene: store_class_map(s.base_prediction(), tmp))
        bundle = json.dumps(scene_bundle_to_json(scene), indent=2) + "\n"
        _atomic_write_bytes(out_dir / f"{stem}.bundle.json", bundle.encode())
        index["scenes"].append(stem)
    _atomic_write_bytes(out_dir / "index.json",
                        (json.dumps(index, indent=2) + "\n").encode())
    logger.info("%d scene(s) written to %s", args.count, out_dir)
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    params = SceneParams(
        height=args.height,
        width=args.width,
        num_classes=args.classes,
        with_decoys=True,
    )
    # The area bound must match the synthetic scene scale, so --beta (or the
    # config file value) only wins when given explicitly; otherwise the scene
    # generator's bound hint is used.
    beta = args.beta if args.beta is not None else params.beta_hint
    scenes = [generate_scene(args.scene_seed + i, params) for i in range(args.scenes)]
    rows = default_ablation_rows(config.alpha, beta)
    reports = run_ablation(
        scenes, rows, config.filter_params(), config.k, config.seed, config.ignore_label
    )
    payload = json.dumps([r.to_json_dict() for r in reports], indent=2) + "\n"
    _atomic_write_bytes(args.out, payload.encode())
    table = ablation_table_text(reports)
    if args.table:
        _atomic_write_bytes(args.table, table.encode())
    sys.stderr.write(table)
    return 0


def cmd_overlay(args: argparse.Namespace) -> int:
    prediction = load_class_map(args.pred)
    if args.base:
        base = load_class_map(args.base).labels
        if base.shape != prediction.labels.shape:
            raise ValueError(
                f"base {base.shape[0]}x{base.shape[1]} does not match prediction "
                f"{prediction.height}x{prediction.width}"
            )
    else:
        base = np.full(prediction.labels.shape, 128, dtype=np.uint8)
    palette = np.asarray(_PALETTE, dtype=np.uint16)
    colors = palette[prediction.labels % len(_PALETTE)]
    blended = ((base.astype(np.uint16)[:, :, None] + colors + 1) // 2).astype(np.uint8)
    header = b"P6\n%d %d\n255\n" % (prediction.width, prediction.height)
    _atomic_write_bytes(args.out, header + blended.tobytes())
    logger.info("overlay written to %s", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="anchor-refine",
        description="Refine segmentation predictions by prompting a promptable "
        "segmenter at high-entropy anchors and fusing the returned masks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("entropy", help="per-pixel entropy of a probability tensor")
    p.add_argument("--prob", required=True, help="input probability tensor (PTM1)")
    p.add_argument("--out", required=True, help="output entropy map (ENT1)")
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("regions", help="threshold box-mean entropy into a region mask")
    p.add_argument("--entropy", required=True, help="input entropy map (ENT1)")
    p.add_argument("--out", required=True, help="output region mask (PGM)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("anchors", help="sample anchor points from a region mask")
    p.add_argument("--region", required=True, help="input region mask (PGM)")
    p.add_argument("--out", required=True, help="output anchors (JSON)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_anchors)

    p = sub.add_parser("refine", help="refine a prediction end to end")
    p.add_argument("--pred", required=True, help="input prediction (PGM)")
    p.add_argument("--prob", required=True, help="input probability tensor (PTM1)")
    p.add_argument("--out", required=True, help="output refined prediction (PGM)")
    _add_config_flags(p, backend=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="IoU report for prediction/truth pairs")
    p.add_argument("--pred", required=True, nargs="+", help="prediction files (PGM)")
    p.add_argument("--truth", required=True, nargs="+", help="truth files (PGM)")
    p.add_argument("--classes", required=True, type=int, help="number of classes")
    p.add_argument("--out", required=True, help="output report (JSON)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate synthetic scenes")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p.add_argument("--count", type=int, default=1, help="number of scenes (default 1)")
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--min-entities", type=int, default=3)
    p.add_argument("--max-entities", type=int, default=5)
    p.add_argument("--noise", type=float, default=0.0, help="background uniform mix")
    p.add_argument("--with-decoys", action="store_true", help="attach decoy mask rules")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ablate", help="toggle ablation over synthetic scenes")
    p.add_argument("--out", required=True, help="output report array (JSON)")
    p.add_argument("--table", help="also write the plain-text table here")
    p.add_argument("--scenes", type=int, default=20, help="scene count (default 20)")
    p.add_argument("--scene-seed", type=int, default=0, dest="scene_seed",
                   help="base seed for scene generation (default 0)")
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--classes", type=int, default=8)
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("overlay", help="blend a prediction over a grayscale base")
    p.add_argument("--pred", required=True, help="input prediction (PGM)")
    p.add_argument("--out", required=True, help="output image (PPM)")
    p.add_argument("--base", help="grayscale base image (PGM); mid-gray if omitted")
    p.set_defaults(func=cmd_overlay)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args))
    except SegmenterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
