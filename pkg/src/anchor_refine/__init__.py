"""Entropy-anchored refinement of semantic segmentation predictions.

The pipeline turns per-pixel class probabilities into prompt points: pixels
whose local mean entropy is high mark unreliable regions, anchors sampled
there prompt a promptable segmenter, and the returned masks are filtered,
labeled from the original prediction, and overwritten largest-first.
"""
from .backends import (
    AnchorFailure,
    BackendRequestError,
    CandidateMask,
    HttpBackend,
    ManifestBackend,
    ManifestError,
    MockOracleBackend,
    SceneEntity,
    SceneSpec,
    SegmentationOutcome,
    SegmenterBackend,
    SegmenterConnectionError,
    SegmenterError,
    SegmenterHTTPError,
    SegmenterProtocolError,
    SegmenterRequest,
    load_manifest_backend,
    rasterize_ownership,
)
from .config import CONFIG_ENV_VAR, ConfigError, PipelineConfig, load_config
from .entropy import (
    Anchor,
    EntropyMap,
    FilterParams,
    anchors_from_json,
    anchors_to_json,
    compute_entropy,
    region_filter,
    sample_anchors,
)
from .formats import (
    FormatError,
    load_binary_mask,
    load_class_map,
    load_entropy_map,
    load_probability_map,
    store_binary_mask,
    store_class_map,
    store_entropy_map,
    store_probability_map,
)
from .fusion import (
    ClassedMask,
    FusionParams,
    assign_class,
    filter_masks,
    overwrite,
    refine,
    sort_masks,
)
from .metrics import (
    ConfusionMatrix,
    EvalReport,
    accumulate_confusion,
    iou_per_class,
    mean_iou,
)
from .synth import (
    CorruptionZone,
    DecoyBackend,
    DecoyRule,
    SceneParams,
    SyntheticScene,
    ablation_table_text,
    build_scene_backend,
    default_ablation_rows,
    generate_scene,
    run_ablation,
    scene_bundle_from_json,
    scene_bundle_to_json,
)
from .tensor import (
    BinaryMask,
    ClassMap,
    ProbabilityMap,
    RunLengthEncoding,
    rle_decode,
    rle_encode,
)

__version__ = "0.1.0"
