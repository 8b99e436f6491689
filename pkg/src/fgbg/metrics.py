"""Bias metrics computed from evaluation records, importance maps, and
masks, plus the probe planner that generates the controlled evaluation sets
the metrics consume.

Metrics:
  background robustness  Acc(any background) / Acc(same-class background)
  foreground focus       foreground importance share / foreground area share
  center bias            1 - (worst corner + worst side) / (2 * center), on
                         the 3x3 placement grid
  size bias curve        accuracy per foreground scale factor, normalized at
                         factor 1.0
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from .assets import AssetManifest
from .distributions import BatesParam, bates_sample
from .errors import DomainError, MetricError, RecordError
from .recombiner import (
    RecombinationConfig,
    SamplePlan,
    choose_background,
    sample_size,
    size_limits,
)
from .records import read_records, write_records
from .seeding import TAG_PROBE, stream

CONDITION_TAGS = ("bg_strategy", "grid_cell", "size_factor")


@dataclass(frozen=True)
class EvalRecord:
    """One probe outcome: what the model said for one rendered condition."""

    sample_id: str
    true_class: int
    predicted_class: int
    condition_tag: str
    condition_value: object  # str | (row, col) | float

    def __post_init__(self):
        if self.condition_tag not in CONDITION_TAGS:
            raise DomainError(f"condition_tag must be one of {CONDITION_TAGS}")


@dataclass
class BiasReport:
    background_robustness: float | None = None
    foreground_focus: float | None = None
    center_bias: float | None = None
    cell_grid: list[list[float]] | None = None  # accuracy relative to center
    size_curve: list[tuple[float, float]] | None = None
    sample_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "background_robustness": self.background_robustness,
            "foreground_focus": self.foreground_focus,
            "center_bias": self.center_bias,
            "cell_grid": self.cell_grid,
            "size_curve": [list(p) for p in self.size_curve] if self.size_curve else None,
            "sample_counts": self.sample_counts,
        }


def accuracy(records: list[EvalRecord]) -> float:
    if not records:
        raise MetricError("cannot compute accuracy of zero records")
    correct = sum(1 for r in records if r.predicted_class == r.true_class)
    return correct / len(records)


def background_robustness(records_all: list[EvalRecord], records_same: list[EvalRecord]) -> float:
    """Ratio of any-background accuracy to same-class-background accuracy."""
    acc_same = accuracy(records_same)
    if acc_same == 0.0:
        raise MetricError("same-class accuracy is zero; robustness undefined")
    return accuracy(records_all) / acc_same


# Finite doubles are m * 2^-e with e <= 1074; scaling by 2^1080 makes every
# pixel an exact integer, so importance sums carry no rounding error.
_EXACT_SHIFT = 1 << 1080


def _exact_scaled_sum(values: np.ndarray) -> int:
    total = 0
    for v in values.tolist():
        num, den = v.as_integer_ratio()
        total += num * (_EXACT_SHIFT // den)
    return total


def foreground_focus(importance: np.ndarray, fg_mask: np.ndarray) -> float:
    """Foreground share of total importance divided by its share of area.

    Sums are evaluated exactly (floats are rationals), so a uniform map
    yields exactly 1.0 for every mask."""
    if importance.shape != fg_mask.shape:
        raise MetricError(
            f"importance {importance.shape} and mask {fg_mask.shape} dimensions differ"
        )
    mask = fg_mask.astype(bool)
    area_fg = int(mask.sum())
    if area_fg == 0:
        raise MetricError("foreground mask is empty")
    if (importance < 0).any():
        raise MetricError("importance map has negative pixels")
    importance = importance.astype(np.float64)
    imp_fg = _exact_scaled_sum(importance[mask])
    imp_total = imp_fg + _exact_scaled_sum(importance[~mask])
    if imp_total <= 0:
        raise MetricError("importance map has zero total importance")
    area_total = importance.size
    return float(Fraction(area_total * imp_fg, area_fg * imp_total))


_CORNERS = ((0, 0), (0, 2), (2, 0), (2, 2))
_SIDES = ((0, 1), (1, 0), (1, 2), (2, 1))


def center_bias(cell_acc) -> float:
    """One minus the mean of worst-corner and worst-side accuracy relative
    to the center cell."""
    grid = np.asarray(cell_acc, dtype=np.float64)
    if grid.shape != (3, 3):
        raise MetricError(f"cell accuracies must be 3x3, got {grid.shape}")
    center = grid[1][1]
    if center <= 0.0:
        raise MetricError("center cell accuracy must be positive")
    worst_corner = min(grid[r][c] for r, c in _CORNERS)
    worst_side = min(grid[r][c] for r, c in _SIDES)
    return 1.0 - (worst_corner + worst_side) / (2.0 * center)


def cell_accuracies(records: list[EvalRecord]) -> np.ndarray:
    """3x3 accuracy grid from grid_cell-conditioned records."""
    grid_records: dict[tuple[int, int], list[EvalRecord]] = {}
    for r in records:
        if r.condition_tag != "grid_cell":
            raise MetricError(f"expected grid_cell records, got {r.condition_tag}")
        grid_records.setdefault(tuple(r.condition_value), []).append(r)
    all_cells = [(row, col) for row in range(3) for col in range(3)]
    missing = [cell for cell in all_cells if cell not in grid_records]
    if missing:
        raise MetricError(f"no records for grid cells {missing}")
    out = np.zeros((3, 3), dtype=np.float64)
    for (row, col), recs in grid_records.items():
        out[row][col] = accuracy(recs)
    return out


def size_bias_curve(records: list[EvalRecord]) -> list[tuple[float, float]]:
    """Accuracy per size factor, normalized by the factor-1.0 accuracy."""
    groups: dict[float, list[EvalRecord]] = {}
    for r in records:
        if r.condition_tag != "size_factor":
            raise MetricError(f"expected size_factor records, got {r.condition_tag}")
        groups.setdefault(float(r.condition_value), []).append(r)
    if 1.0 not in groups:
        raise MetricError("no records at size factor 1.0 to normalize against")
    anchor = accuracy(groups[1.0])
    if anchor == 0.0:
        raise MetricError("accuracy at size factor 1.0 is zero; curve undefined")
    return [(f, accuracy(groups[f]) / anchor) for f in sorted(groups)]


# --- probe planning ----------------------------------------------------------

_PROBE_KINDS = ("bg_swap", "grid", "size_sweep")
_KIND_IDS = {k: i for i, k in enumerate(_PROBE_KINDS)}


def probe_set(
    manifest: AssetManifest,
    config: RecombinationConfig,
    kind: str,
    factors: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0),
) -> list[SamplePlan]:
    """Deterministic evaluation plans, equal counts per foreground.

    bg_swap: one same-class and one any-class plan per foreground, sharing
    size/position/blur draws so only the background changes. grid: nine
    plans per foreground, one per 3x3 cell, at the exact mean size with a
    fixed background per foreground. size_sweep: one plan per factor per
    foreground, the mean size scaled by the factor.
    """
    if kind not in _PROBE_KINDS:
        raise DomainError(f"probe kind must be one of {_PROBE_KINDS}")
    plans: list[SamplePlan] = []
    param = BatesParam(config.eta)
    index = 0
    for fg_i, fg in enumerate(manifest.foregrounds):
        rng = stream(config.seed, TAG_PROBE, _KIND_IDS[kind], fg_i)
        if kind == "bg_swap":
            s_l, s_u = size_limits(fg.orig_size_fraction, fg.orig_size_fraction, "mean")
            # shared draws: the two conditions differ only in the background
            s = sample_size(s_l, s_u, config.size_band, rng)
            x, y = bates_sample(param, rng), bates_sample(param, rng)
            sigma = config.sigma_max * (0.1 + 0.9 * float(rng.random())) if config.sigma_max > 0 else 0.0
            for strategy in ("same_class", "all"):
                bg_id = choose_background(fg, manifest, strategy, rng)
                plans.append(
                    SamplePlan(
                        fg_id=fg.id,
                        use_original=False,
                        epoch=0,
                        index=index,
                        bg_id=bg_id,
                        size_fraction=s,
                        center=(x, y),
                        blur_sigma=sigma,
                        condition=f"bg:{strategy}",
                    )
                )
                index += 1
        elif kind == "grid":
            bg_id = choose_background(fg, manifest, config.bg_strategy, rng)
            bg = manifest.background(bg_id)
            s = (fg.orig_size_fraction + bg.orig_fg_size_fraction) / 2.0  # exact mean
            sigma = config.sigma_max * (0.1 + 0.9 * float(rng.random())) if config.sigma_max > 0 else 0.0
            for row in range(3):
                for col in range(3):
                    plans.append(
                        SamplePlan(
                            fg_id=fg.id,
                            use_original=False,
                            epoch=0,
                            index=index,
                            bg_id=bg_id,
                            size_fraction=s,
                            center=None,
                            blur_sigma=sigma,
                            grid_cell=(row, col),
                            condition=f"cell:{row},{col}",
                        )
                    )
                    index += 1
        else:  # size_sweep
            bg_id = choose_background(fg, manifest, config.bg_strategy, rng)
            bg = manifest.background(bg_id)
            mean_s = (fg.orig_size_fraction + bg.orig_fg_size_fraction) / 2.0
            x, y = bates_sample(param, rng), bates_sample(param, rng)
            sigma = config.sigma_max * (0.1 + 0.9 * float(rng.random())) if config.sigma_max > 0 else 0.0
            for f in factors:
                plans.append(
                    SamplePlan(
                        fg_id=fg.id,
                        use_original=False,
                        epoch=0,
                        index=index,
                        bg_id=bg_id,
                        size_fraction=min(mean_s * f, 1.0),
                        center=(x, y),
                        blur_sigma=sigma,
                        size_factor=f,
                        condition=f"f_size:{f}",
                    )
                )
                index += 1
    return plans


# --- record and importance-map files ----------------------------------------


def eval_record_to_dict(r: EvalRecord) -> dict:
    value = list(r.condition_value) if isinstance(r.condition_value, tuple) else r.condition_value
    return {
        "sample_id": r.sample_id,
        "true_class": r.true_class,
        "predicted_class": r.predicted_class,
        "condition_tag": r.condition_tag,
        "condition_value": value,
    }


def eval_record_from_dict(d: dict) -> EvalRecord:
    tag = d["condition_tag"]
    value = d["condition_value"]
    if tag == "grid_cell":
        value = (int(value[0]), int(value[1]))
    elif tag == "size_factor":
        value = float(value)
    return EvalRecord(
        sample_id=str(d["sample_id"]),
        true_class=int(d["true_class"]),
        predicted_class=int(d["predicted_class"]),
        condition_tag=tag,
        condition_value=value,
    )


def write_eval_records(path, records: list[EvalRecord]) -> int:
    return write_records(path, (eval_record_to_dict(r) for r in records))


def read_eval_records(path) -> list[EvalRecord]:
    out = []
    for i, d in enumerate(read_records(path), start=1):
        try:
            out.append(eval_record_from_dict(d))
        except (KeyError, TypeError, ValueError, DomainError) as exc:
            raise RecordError(f"{path}:{i}: bad eval record: {exc}") from exc
    return out


_IMPF_MAGIC = b"IMPF"


def write_importance(path, imp: np.ndarray) -> None:
    """Write a float32 importance map: 'IMPF' magic, uint32 LE width and
    height, then row-major float32 pixels."""
    imp = np.asarray(imp, dtype=np.float32)
    h, w = imp.shape
    with open(path, "wb") as fh:
        fh.write(_IMPF_MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(imp.tobytes(order="C"))


def read_importance(path) -> np.ndarray:
    """Read an importance map: the float binary above, or a 16-bit
    single-channel PNG. Negative or all-zero maps are rejected."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == _IMPF_MAGIC:
            w, h = struct.unpack("<II", fh.read(8))
            data = np.frombuffer(fh.read(4 * w * h), dtype="<f4").reshape(h, w)
            imp = data.astype(np.float64)
        else:
            with Image.open(path) as im:
                if im.mode not in ("I", "I;16"):
                    raise MetricError(f"{path}: importance PNG must be 16-bit single channel")
                imp = np.asarray(im, dtype=np.float64)
    if (imp < 0).any():
        raise MetricError(f"{path}: importance map has negative pixels")
    if not (imp > 0).any():
        raise MetricError(f"{path}: importance map has no positive pixel")
    return imp


def read_mask_png(path) -> np.ndarray:
    """Binary mask from a grayscale PNG: true where the pixel is above half."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr >= 128
