"""Pixel rendering: scale a foreground cutout to a target area fraction,
soften its alpha edge, paste it onto a background, and run the configured
augmentation stages.

All operations are pure transforms of uint8 arrays and round half-up, so a
plan renders to identical bytes on every run and under any parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from PIL import Image
from scipy.ndimage import convolve1d

from .assets import OPAQUE_THRESHOLD, AssetManifest
from .errors import DomainError, RenderError
from .images import cached_rgb, cached_rgba
from .recombiner import RecombinationConfig, SamplePlan
from .seeding import TAG_STAGE, stream


def _quantize(v: np.ndarray) -> np.ndarray:
    # round half-up, saturate to 8 bit
    return np.clip(np.floor(v + 0.5), 0.0, 255.0).astype(np.uint8)


def opaque_count(rgba: np.ndarray) -> int:
    """Number of pixels whose alpha is above one half."""
    return int((rgba[..., 3] >= OPAQUE_THRESHOLD).sum())


def _bilinear_resize(rgba: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    mode = "RGBA" if rgba.shape[2] == 4 else "RGB"
    return np.asarray(Image.fromarray(rgba, mode).resize((new_w, new_h), Image.BILINEAR))


def _opaque_bbox(fg: np.ndarray, pad: int = 1) -> tuple[int, int, int, int]:
    rows = np.nonzero(fg[..., 3].any(axis=1))[0]
    cols = np.nonzero(fg[..., 3].any(axis=0))[0]
    h, w = fg.shape[:2]
    return (
        max(int(rows[0]) - pad, 0),
        min(int(rows[-1]) + 1 + pad, h),
        max(int(cols[0]) - pad, 0),
        min(int(cols[-1]) + 1 + pad, w),
    )


def _resize_to_area(
    fg: np.ndarray, target_px: float, max_w: int, max_h: int
) -> np.ndarray:
    """Scale fg (aspect preserved, bilinear) so its opaque pixel count hits
    target_px, capped to fit in max_w x max_h. Refines the scale once or
    twice to absorb thresholding error from integer dimensions.

    Foregrounds are stored full-frame with transparent padding; when the
    frame itself cannot grow enough, the object's bounding box is cropped
    out and scaled instead, so the cap applies to the object, not the
    storage canvas."""
    h, w = fg.shape[:2]
    current = opaque_count(fg)
    if current == 0:
        raise RenderError("foreground has no opaque pixels")
    f = math.sqrt(target_px / current)
    if f > min(max_w / w, max_h / h):
        # Full-frame foregrounds carry transparent padding; shed just enough
        # of it that scaling by f stays inside the canvas. The crop is kept
        # as large as allowed (not the tight bbox) for fine area granularity,
        # and always contains the object.
        top, bottom, left, right = _opaque_bbox(fg)
        # 6% headroom lets the refinement push past the first scale estimate
        want_w = max(min(w, int(max_w / (1.06 * f))), right - left)
        want_h = max(min(h, int(max_h / (1.06 * f))), bottom - top)
        # center the window on the object, clamped so it contains the bbox
        # and stays inside the frame
        cx, cy = (left + right) // 2, (top + bottom) // 2
        x0 = min(max(cx - want_w // 2, right - want_w, 0), left, w - want_w)
        y0 = min(max(cy - want_h // 2, bottom - want_h, 0), top, h - want_h)
        fg = np.ascontiguousarray(fg[y0 : y0 + want_h, x0 : x0 + want_w])
        h, w = fg.shape[:2]

    tol = 0.005 * target_px
    best = None  # (area error, output)
    best_scale = f

    def attempt(src: np.ndarray, new_w: int, new_h: int):
        nonlocal best, best_scale
        out = _bilinear_resize(src, new_w, new_h)
        err = abs(opaque_count(out) - target_px)
        if best is None or err < best[0]:
            best = (err, out)
            best_scale = new_w / src.shape[1]
        return out

    for _ in range(3):
        capped = min(f, max_w / w, max_h / h)
        new_w = min(int(math.floor(w * capped + 0.5)), max_w)
        new_h = min(int(math.floor(h * capped + 0.5)), max_h)
        if new_w < 1 or new_h < 1:
            raise RenderError(f"target foreground size {new_w}x{new_h} is smaller than 1x1")
        if (new_w, new_h) == (w, h):
            # unit scale: the unresized image is itself a candidate
            err = abs(current - target_px)
            if best is None or err < best[0]:
                best = (err, fg)
                best_scale = 1.0
            break
        out = attempt(fg, new_w, new_h)
        if capped < f:  # cap binds; no higher scale is available
            break
        actual = opaque_count(out)
        if actual == 0 or abs(actual - target_px) <= tol:
            break
        f = capped * math.sqrt(target_px / actual)

    if best[0] > tol:
        # Thresholded straight edges snap the opaque area between plateaus
        # that single-axis dimension steps cannot always land between.
        # Nudging the axes independently, and re-resampling from a frame
        # padded with transparent pixels (which shifts the sampling phase
        # without touching the object), gives fine deterministic control.
        for pad in (0, 1, 2, 3):
            if pad == 0:
                src = fg
            else:
                src = np.zeros((h + pad, w + pad, 4), np.uint8)
                y_off, x_off = pad // 2, pad // 2
                src[y_off : y_off + h, x_off : x_off + w] = fg
            base_w = int(math.floor(src.shape[1] * best_scale + 0.5))
            base_h = int(math.floor(src.shape[0] * best_scale + 0.5))
            for dw, dh in ((0, 0), (0, 1), (1, 0), (0, -1), (-1, 0), (1, 1), (-1, -1)):
                cw, ch = base_w + dw, base_h + dh
                if 1 <= cw <= max_w and 1 <= ch <= max_h:
                    attempt(src, cw, ch)
                    if best[0] <= tol:
                        return best[1]
    return best[1]


def resize_foreground(fg: np.ndarray, s: float, bg_w: int, bg_h: int) -> np.ndarray:
    """Resize so the opaque area is fraction s of a bg_w x bg_h canvas."""
    if not 0.0 < s <= 1.0:
        raise DomainError(f"size fraction must be in (0, 1], got {s}")
    return _resize_to_area(fg, s * bg_w * bg_h, bg_w, bg_h)


def smooth_alpha(fg: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian-blur the alpha channel (std sigma, radius ceil(3*sigma),
    edges clamped). Color channels untouched; sigma 0 is the identity."""
    if sigma < 0.0:
        raise DomainError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return fg
    radius = int(math.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(t * t) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    alpha = fg[..., 3].astype(np.float64)
    alpha = convolve1d(alpha, kernel, axis=0, mode="nearest")
    alpha = convolve1d(alpha, kernel, axis=1, mode="nearest")
    out = np.array(fg, copy=True)
    out[..., 3] = _quantize(alpha)
    return out


def _blend_at(fg: np.ndarray, bg: np.ndarray, left: int, top: int) -> np.ndarray:
    fh, fw = fg.shape[:2]
    out = np.array(bg, copy=True)
    region = out[top : top + fh, left : left + fw].astype(np.float64)
    alpha = fg[..., 3:4].astype(np.float64) / 255.0
    blended = alpha * fg[..., :3].astype(np.float64) + (1.0 - alpha) * region
    out[top : top + fh, left : left + fw] = _quantize(blended)
    return out


def composite(fg: np.ndarray, bg: np.ndarray, center: tuple[float, float]) -> np.ndarray:
    """Alpha-blend fg over bg with its center at the normalized position.

    The normalized coordinate spans the centers for which the foreground
    lies fully inside the canvas: x=0 flush left, x=1 flush right.
    """
    fh, fw = fg.shape[:2]
    bh, bw = bg.shape[:2]
    if fw > bw or fh > bh:
        raise RenderError(f"foreground {fw}x{fh} larger than background {bw}x{bh}")
    x, y = center
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise DomainError(f"center must be in [0,1]^2, got {center}")
    left = int(math.floor(x * (bw - fw) + 0.5))
    top = int(math.floor(y * (bh - fh) + 0.5))
    return _blend_at(fg, bg, left, top)


def place_in_cell(fg: np.ndarray, bg: np.ndarray, cell: tuple[int, int]) -> np.ndarray:
    """Center fg inside one cell of the 3x3 grid over bg, clamped so it
    stays fully on the canvas."""
    row, col = cell
    if row not in (0, 1, 2) or col not in (0, 1, 2):
        raise DomainError(f"cell must be in {{0,1,2}}^2, got {cell}")
    fh, fw = fg.shape[:2]
    bh, bw = bg.shape[:2]
    if fw > bw or fh > bh:
        raise RenderError(f"foreground {fw}x{fh} larger than background {bw}x{bh}")
    cx = (col + 0.5) * bw / 3.0
    cy = (row + 0.5) * bh / 3.0
    left = int(math.floor(cx - fw / 2.0 + 0.5))
    top = int(math.floor(cy - fh / 2.0 + 0.5))
    left = min(max(left, 0), bw - fw)
    top = min(max(top, 0), bh - fh)
    return _blend_at(fg, bg, left, top)


# --- augmentation stages -----------------------------------------------------

GEOMETRIC = "geometric_crop"
COLOR = "color"


@dataclass(frozen=True)
class AugStage:
    """A named image transform. Geometric stages may change geometry; color
    stages must preserve dimensions."""

    name: str
    kind: str  # GEOMETRIC or COLOR
    fn: Callable[[np.ndarray, np.random.Generator], np.ndarray]


def _random_resized_crop(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    h, w = img.shape[:2]
    area = float(rng.uniform(0.67, 1.0)) * h * w
    ratio = math.exp(float(rng.uniform(math.log(3 / 4), math.log(4 / 3))))
    cw = min(max(int(math.floor(math.sqrt(area * ratio) + 0.5)), 1), w)
    ch = min(max(int(math.floor(math.sqrt(area / ratio) + 0.5)), 1), h)
    left = int(rng.integers(0, w - cw + 1))
    top = int(rng.integers(0, h - ch + 1))
    crop = img[top : top + ch, left : left + cw]
    return _bilinear_resize(np.ascontiguousarray(crop), w, h)


def _horizontal_flip(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if rng.random() < 0.5:
        return np.ascontiguousarray(img[:, ::-1])
    return img


def _color_jitter(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    brightness = float(rng.uniform(0.7, 1.3))
    contrast = float(rng.uniform(0.7, 1.3))
    v = img.astype(np.float64) * brightness
    mean = v.mean()
    return _quantize((v - mean) * contrast + mean)


BUILTIN_STAGES = {
    "crop": AugStage("crop", GEOMETRIC, _random_resized_crop),
    "flip": AugStage("flip", GEOMETRIC, _horizontal_flip),
    "jitter": AugStage("jitter", COLOR, _color_jitter),
}


def stages_from_names(names: Sequence[str]) -> list[AugStage]:
    try:
        return [BUILTIN_STAGES[n] for n in names]
    except KeyError as exc:
        raise DomainError(f"unknown stage {exc.args[0]!r}; built-ins: {sorted(BUILTIN_STAGES)}")


# --- full plan rendering -----------------------------------------------------


def _reconstruct_original(manifest: AssetManifest, fg_id: str) -> np.ndarray:
    fg_asset = manifest.foreground(fg_id)
    bg_asset = manifest.background_for_source(fg_asset.source_image_id)
    if bg_asset is None:
        raise RenderError(
            f"foreground {fg_asset.id!r}: source image cannot be reconstructed, "
            f"its background is not in the manifest"
        )
    fg = cached_rgba(fg_asset.image_ref)
    bg = cached_rgb(bg_asset.image_ref)
    if fg.shape[:2] != bg.shape[:2]:
        raise RenderError(
            f"foreground {fg_asset.id!r} and background {bg_asset.id!r} have "
            f"different dimensions; cannot reconstruct the source image"
        )
    return _blend_at(fg, bg, 0, 0)


def render(
    plan: SamplePlan,
    manifest: AssetManifest,
    config: RecombinationConfig,
    aug_pipeline: Sequence[AugStage] | None = None,
) -> np.ndarray:
    """Render a plan to an RGB uint8 array.

    paste_crop_color composites first and augments after; crop_paste_color
    runs geometric stages on the background before pasting, which keeps the
    foreground fully visible. Original-image plans reconstruct the source
    and run the full pipeline. Stage rng streams are keyed by
    (seed, epoch, index, stage position), independent of worker layout.
    """
    pipeline = list(aug_pipeline) if aug_pipeline is not None else stages_from_names(config.stages)
    geo = [(i, st) for i, st in enumerate(pipeline) if st.kind == GEOMETRIC]
    col = [(i, st) for i, st in enumerate(pipeline) if st.kind == COLOR]

    def stage_rng(ordinal: int) -> np.random.Generator:
        return stream(config.seed, TAG_STAGE, plan.epoch, plan.index, ordinal)

    if plan.use_original:
        img = _reconstruct_original(manifest, plan.fg_id)
        for i, st in geo:
            img = st.fn(img, stage_rng(i))
        for i, st in col:
            img = st.fn(img, stage_rng(i))
        return img

    fg_asset = manifest.foreground(plan.fg_id)
    bg_asset = manifest.background(plan.bg_id)
    fg = cached_rgba(fg_asset.image_ref)
    bg = cached_rgb(bg_asset.image_ref)

    if config.aug_order == "crop_paste_color":
        for i, st in geo:
            bg = st.fn(bg, stage_rng(i))
    bh, bw = bg.shape[:2]

    if plan.grid_cell is not None:
        fg_sized = _resize_to_area(fg, plan.size_fraction * bw * bh, bw // 3, bh // 3)
        fg_soft = smooth_alpha(fg_sized, plan.blur_sigma)
        img = place_in_cell(fg_soft, bg, plan.grid_cell)
    else:
        fg_sized = resize_foreground(fg, plan.size_fraction, bw, bh)
        fg_soft = smooth_alpha(fg_sized, plan.blur_sigma)
        img = composite(fg_soft, bg, plan.center)

    if config.aug_order == "paste_crop_color":
        for i, st in geo:
            img = st.fn(img, stage_rng(i))
    for i, st in col:
        img = st.fn(img, stage_rng(i))
    return img
