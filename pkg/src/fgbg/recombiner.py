"""Deterministic epoch planning.

plan_sample(manifest, config, epoch, index) is a pure function: the
foreground is the index-th entry of a seeded per-epoch shuffle, and every
random decision (original-image mixing, background choice, target size,
placement, blur strength) comes from an rng stream keyed by
(seed, epoch, index). Any worker can therefore plan any sample
independently and reproduce identical results.

Draw order within a sample's stream is fixed: mixing coin, background
pick, size, placement x, placement y, blur sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .assets import AssetManifest, ForegroundAsset
from .distributions import BatesParam, bates_sample
from .errors import DomainError, PlanError
from .seeding import TAG_PLAN, TAG_SHUFFLE, stream

BG_STRATEGIES = ("original", "same_class", "all")
SIZE_STRATEGIES = ("mean", "range")
MIX_SCHEDULES = ("none", "constant", "linear", "reverse_linear", "cosine")
AUG_ORDERS = ("paste_crop_color", "crop_paste_color")


@dataclass(frozen=True)
class RecombinationConfig:
    """Every knob of the recombination pipeline plus the master seed.

    Defaults are the engine's production configuration: any-class
    backgrounds, range size strategy, pruning at 0.8, sigma_max 4.0,
    cosine mixing, paste-then-augment ordering.
    """

    bg_strategy: str = "all"
    size_strategy: str = "range"
    size_band: float = 0.3
    eta: int = 1
    sigma_max: float = 4.0
    mix_schedule: str = "cosine"
    mix_p: float = 0.5  # only used by the constant schedule
    aug_order: str = "paste_crop_color"
    t_prune: float = 0.8
    total_epochs: int = 300
    seed: int = 0
    stages: tuple[str, ...] = ()  # names of built-in augmentation stages

    def __post_init__(self):
        if self.bg_strategy not in BG_STRATEGIES:
            raise DomainError(f"bg_strategy must be one of {BG_STRATEGIES}")
        if self.size_strategy not in SIZE_STRATEGIES:
            raise DomainError(f"size_strategy must be one of {SIZE_STRATEGIES}")
        if self.mix_schedule not in MIX_SCHEDULES:
            raise DomainError(f"mix_schedule must be one of {MIX_SCHEDULES}")
        if self.aug_order not in AUG_ORDERS:
            raise DomainError(f"aug_order must be one of {AUG_ORDERS}")
        if not 0.0 <= self.size_band < 1.0:
            raise DomainError(f"size_band must be in [0, 1), got {self.size_band}")
        if not 0.0 <= self.mix_p <= 1.0:
            raise DomainError(f"mix_p must be in [0, 1], got {self.mix_p}")
        if self.sigma_max < 0.0:
            raise DomainError(f"sigma_max must be >= 0, got {self.sigma_max}")
        if not 0.0 < self.t_prune <= 1.0:
            raise DomainError(f"t_prune must be in (0, 1], got {self.t_prune}")
        if self.total_epochs < 1:
            raise DomainError(f"total_epochs must be >= 1, got {self.total_epochs}")
        BatesParam(self.eta)  # validates
        object.__setattr__(self, "stages", tuple(self.stages))


@dataclass(frozen=True)
class SamplePlan:
    fg_id: str
    use_original: bool
    epoch: int
    index: int
    bg_id: str | None = None
    size_fraction: float | None = None
    center: tuple[float, float] | None = None  # normalized (x, y)
    blur_sigma: float | None = None
    # probe metadata (None for training plans)
    grid_cell: tuple[int, int] | None = None  # (row, col)
    size_factor: float | None = None
    condition: str | None = None


@dataclass(frozen=True)
class EpochPlan:
    epoch: int
    plans: tuple[SamplePlan, ...]


def mixing_probability(schedule: str, epoch: int, total_epochs: int, constant_p: float = 0.0) -> float:
    """Probability of rendering the untouched source image at this epoch.

    Schedules: none -> 0; constant -> p; linear ramps 0 to 1; reverse_linear
    ramps 1 to 0; cosine is the half-cosine ramp 0 to 1. A one-epoch run
    evaluates every ramp at progress 0.
    """
    if schedule not in MIX_SCHEDULES:
        raise DomainError(f"unknown mix schedule {schedule!r}")
    if not 0 <= epoch < total_epochs:
        raise PlanError(f"epoch {epoch} outside [0, {total_epochs})")
    t = epoch / (total_epochs - 1) if total_epochs > 1 else 0.0
    if schedule == "none":
        return 0.0
    if schedule == "constant":
        return constant_p
    if schedule == "linear":
        return t
    if schedule == "reverse_linear":
        return 1.0 - t
    return 0.5 * (1.0 - math.cos(math.pi * t))


def size_limits(r_fg: float, r_bg: float, strategy: str) -> tuple[float, float]:
    """Lower/upper size targets from the two original size fractions."""
    if strategy == "mean":
        m = (r_fg + r_bg) / 2.0
        return m, m
    if strategy == "range":
        return min(r_fg, r_bg), max(r_fg, r_bg)
    raise DomainError(f"unknown size strategy {strategy!r}")


def sample_size(s_l: float, s_u: float, band: float, rng: np.random.Generator) -> float:
    """Uniform draw on [(1-band)*s_l, (1+band)*s_u], clamped into (0, 1]."""
    if not 0.0 < s_l <= s_u:
        raise DomainError(f"need 0 < s_l <= s_u, got ({s_l}, {s_u})")
    lo = (1.0 - band) * s_l
    hi = (1.0 + band) * s_u
    return min(float(rng.uniform(lo, hi)), 1.0)


def choose_background(
    fg: ForegroundAsset, manifest: AssetManifest, strategy: str, rng: np.random.Generator
) -> str:
    """Pick a background id: the foreground's own, a same-class one, or any."""
    if strategy == "original":
        bg = manifest.background_for_source(fg.source_image_id)
        if bg is None:
            raise PlanError(
                f"foreground {fg.id!r}: original background (source "
                f"{fg.source_image_id!r}) is not in the manifest (pruned?)"
            )
        return bg.id
    if strategy == "same_class":
        ids = manifest.class_index.get(fg.class_id)
        if not ids:
            raise PlanError(f"foreground {fg.id!r}: no backgrounds for class {fg.class_id}")
        return ids[int(rng.integers(0, len(ids)))]
    if strategy == "all":
        bgs = manifest.backgrounds
        if not bgs:
            raise PlanError("manifest has no backgrounds")
        return bgs[int(rng.integers(0, len(bgs)))].id
    raise DomainError(f"unknown background strategy {strategy!r}")


@lru_cache(maxsize=8)
def _epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    perm = stream(seed, TAG_SHUFFLE, epoch).permutation(n)
    perm.setflags(write=False)
    return perm


def shuffled_foreground(manifest: AssetManifest, config: RecombinationConfig, epoch: int, index: int) -> ForegroundAsset:
    n = len(manifest.foregrounds)
    if not 0 <= index < n:
        raise PlanError(f"index {index} outside [0, {n})")
    perm = _epoch_permutation(config.seed, epoch, n)
    return manifest.foregrounds[int(perm[index])]


def plan_sample(
    manifest: AssetManifest, config: RecombinationConfig, epoch: int, index: int
) -> SamplePlan:
    """Resolve every decision for one sample. Pure in (manifest, config,
    epoch, index)."""
    fg = shuffled_foreground(manifest, config, epoch, index)
    p_mix = mixing_probability(config.mix_schedule, epoch, config.total_epochs, config.mix_p)
    rng = stream(config.seed, TAG_PLAN, epoch, index)

    use_original = bool(rng.random() < p_mix)
    if use_original and manifest.background_for_source(fg.source_image_id) is None:
        # The source image cannot be reconstructed once its background was
        # pruned; fall back to recombining this sample.
        use_original = False
    if use_original:
        return SamplePlan(fg_id=fg.id, use_original=True, epoch=epoch, index=index)

    bg_id = choose_background(fg, manifest, config.bg_strategy, rng)
    bg = manifest.background(bg_id)
    s_l, s_u = size_limits(fg.orig_size_fraction, bg.orig_fg_size_fraction, config.size_strategy)
    s = sample_size(s_l, s_u, config.size_band, rng)
    param = BatesParam(config.eta)
    x = bates_sample(param, rng)
    y = bates_sample(param, rng)
    u = float(rng.random())  # always consumed, keeps stream layout fixed
    sigma = config.sigma_max * (0.1 + 0.9 * u) if config.sigma_max > 0 else 0.0
    return SamplePlan(
        fg_id=fg.id,
        use_original=False,
        epoch=epoch,
        index=index,
        bg_id=bg_id,
        size_fraction=s,
        center=(x, y),
        blur_sigma=sigma,
    )


def plan_epoch(manifest: AssetManifest, config: RecombinationConfig, epoch: int) -> EpochPlan:
    """One plan per foreground; each foreground appears exactly once."""
    n = len(manifest.foregrounds)
    return EpochPlan(epoch, tuple(plan_sample(manifest, config, epoch, i) for i in range(n)))


# --- plan record serialization (fixed field order) --------------------------

_PLAN_FIELDS = (
    "epoch",
    "index",
    "fg_id",
    "use_original",
    "bg_id",
    "size_fraction",
    "center",
    "blur_sigma",
    "grid_cell",
    "size_factor",
    "condition",
)


def plan_to_dict(plan: SamplePlan) -> dict:
    d = {
        "epoch": plan.epoch,
        "index": plan.index,
        "fg_id": plan.fg_id,
        "use_original": plan.use_original,
        "bg_id": plan.bg_id,
        "size_fraction": plan.size_fraction,
        "center": list(plan.center) if plan.center is not None else None,
        "blur_sigma": plan.blur_sigma,
        "grid_cell": list(plan.grid_cell) if plan.grid_cell is not None else None,
        "size_factor": plan.size_factor,
        "condition": plan.condition,
    }
    return {k: d[k] for k in _PLAN_FIELDS}


def plan_from_dict(d: dict) -> SamplePlan:
    return SamplePlan(
        fg_id=d["fg_id"],
        use_original=bool(d["use_original"]),
        epoch=int(d["epoch"]),
        index=int(d["index"]),
        bg_id=d.get("bg_id"),
        size_fraction=d.get("size_fraction"),
        center=tuple(d["center"]) if d.get("center") is not None else None,
        blur_sigma=d.get("blur_sigma"),
        grid_cell=tuple(d["grid_cell"]) if d.get("grid_cell") is not None else None,
        size_factor=d.get("size_factor"),
        condition=d.get("condition"),
    )


# --- flat key=value config files --------------------------------------------

_CONFIG_KEYS = {
    "bg_strategy": str,
    "size_strategy": str,
    "size_band": float,
    "eta": int,
    "sigma_max": float,
    "mix_schedule": str,
    "mix_p": float,
    "aug_order": str,
    "t_prune": float,
    "total_epochs": int,
    "seed": int,
}


def save_config(config: RecombinationConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in _CONFIG_KEYS:
            fh.write(f"{key}={getattr(config, key)}\n")
        fh.write(f"stages={','.join(config.stages)}\n")


def load_config(path) -> RecombinationConfig:
    values: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DomainError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key == "stages":
                values["stages"] = tuple(s for s in raw.split(",") if s)
            elif key in _CONFIG_KEYS:
                values[key] = _CONFIG_KEYS[key](raw)
            else:
                raise DomainError(f"{path}:{lineno}: unknown config key {key!r}")
    return RecombinationConfig(**values)
