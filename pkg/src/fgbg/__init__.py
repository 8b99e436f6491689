"""fgbg: recombine segmented foregrounds with inpainted backgrounds as a
deterministic, seedable data augmentation engine, plus the bias probes and
metrics that the same control enables."""

from .assets import (
    AssetManifest,
    BackgroundAsset,
    ForegroundAsset,
    build_manifest,
    load_manifest,
    make_manifest,
    prune_backgrounds,
    save_manifest,
    validate,
)
from .compositor import (
    AugStage,
    composite,
    place_in_cell,
    render,
    resize_foreground,
    smooth_alpha,
    stages_from_names,
)
from .distributions import BatesParam, bates_cdf, bates_pdf, bates_sample, sawtooth
from .errors import FgbgError
from .metrics import (
    BiasReport,
    EvalRecord,
    accuracy,
    background_robustness,
    center_bias,
    foreground_focus,
    probe_set,
    size_bias_curve,
)
from .recombiner import (
    EpochPlan,
    RecombinationConfig,
    SamplePlan,
    choose_background,
    mixing_probability,
    plan_epoch,
    plan_sample,
    sample_size,
    size_limits,
)
from .synth import generate_corpus
from .variants import (
    ScoreParams,
    VariantCandidate,
    mask_iou,
    merge_masks,
    select_best_variant,
    variant_score,
)

__all__ = [
    "AssetManifest",
    "AugStage",
    "BackgroundAsset",
    "BatesParam",
    "BiasReport",
    "EpochPlan",
    "EvalRecord",
    "FgbgError",
    "ForegroundAsset",
    "RecombinationConfig",
    "SamplePlan",
    "ScoreParams",
    "VariantCandidate",
    "accuracy",
    "background_robustness",
    "bates_cdf",
    "bates_pdf",
    "bates_sample",
    "build_manifest",
    "center_bias",
    "choose_background",
    "composite",
    "foreground_focus",
    "generate_corpus",
    "load_manifest",
    "make_manifest",
    "mask_iou",
    "merge_masks",
    "mixing_probability",
    "place_in_cell",
    "plan_epoch",
    "plan_sample",
    "probe_set",
    "prune_backgrounds",
    "render",
    "resize_foreground",
    "sample_size",
    "save_manifest",
    "sawtooth",
    "select_best_variant",
    "size_bias_curve",
    "size_limits",
    "smooth_alpha",
    "stages_from_names",
    "validate",
    "variant_score",
]

__version__ = "0.1.0"
