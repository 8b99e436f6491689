import math

import numpy as np
import pytest

from fgbg.assets import make_manifest, prune_backgrounds
from fgbg.compositor import (
    composite,
    opaque_count,
    place_in_cell,
    render,
    resize_foreground,
    smooth_alpha,
    stages_from_names,
)
from fgbg.errors import DomainError, RenderError
from fgbg.images import cached_rgba, cached_rgb
from fgbg.recombiner import RecombinationConfig, plan_sample
from fgbg.seeding import stream


def disk_rgba(size, radius, color=(200, 30, 30), cx=None, cy=None):
    cx = size / 2 if cx is None else cx
    cy = size / 2 if cy is None else cy
    yy, xx = np.mgrid[0:size, 0:size]
    mask = (xx - cx + 0.5) ** 2 + (yy - cy + 0.5) ** 2 <= radius * radius
    img = np.zeros((size, size, 4), np.uint8)
    img[..., :3] = color
    img[..., 3] = np.where(mask, 255, 0)
    return img


def square_rgba(size, side, color=(255, 0, 255)):
    img = np.zeros((size, size, 4), np.uint8)
    img[..., :3] = color
    lo = (size - side) // 2
    img[lo : lo + side, lo : lo + side, 3] = 255
    return img


# --- resize_foreground ---------------------------------------------------------


def test_resize_hits_target_area():
    fg = disk_rgba(224, math.sqrt(10000 / math.pi))  # ~10,000 opaque px
    out = resize_foreground(fg, 0.1, 224, 224)
    target = 0.1 * 224 * 224  # ~5018
    assert abs(opaque_count(out) - target) <= 0.02 * target


def test_resize_identity_when_fraction_matches():
    fg = disk_rgba(64, 20)
    s = opaque_count(fg) / (64 * 64)
    out = resize_foreground(fg, s, 64, 64)
    assert out is fg  # unchanged, bit-identical


def test_resize_caps_to_background():
    fg = square_rgba(100, 90)
    out = resize_foreground(fg, 1.0, 50, 50)  # would need upscale; capped
    assert out.shape[0] <= 50 and out.shape[1] <= 50


def test_resize_rejects_bad_fraction():
    fg = disk_rgba(64, 20)
    with pytest.raises(DomainError):
        resize_foreground(fg, 0.0, 64, 64)
    with pytest.raises(DomainError):
        resize_foreground(fg, 1.5, 64, 64)


def test_resize_subpixel_target_errors():
    fg = disk_rgba(512, 200)
    with pytest.raises(RenderError):
        resize_foreground(fg, 0.0001, 4, 4)


def test_resize_preserves_aspect():
    img = np.zeros((100, 50, 4), np.uint8)
    img[20:80, 10:40, 3] = 255
    img[..., 0] = 99
    out = resize_foreground(img, 0.05, 200, 200)
    assert abs(out.shape[0] / out.shape[1] - 2.0) < 0.1


# --- smooth_alpha ----------------------------------------------------------------


def test_smooth_sigma_zero_identity():
    fg = disk_rgba(64, 20)
    out = smooth_alpha(fg, 0.0)
    assert np.array_equal(out, fg)


def test_smooth_step_edge_half_amplitude():
    img = np.zeros((16, 32, 4), np.uint8)
    img[:, 16:, 3] = 255
    out = smooth_alpha(img, 2.0)
    straddle = out[8, 15, 3].astype(float), out[8, 16, 3].astype(float)
    assert abs(sum(straddle) / 2 - 127.5) <= 1.0
    # color channels untouched
    assert np.array_equal(out[..., :3], img[..., :3])


def dense_blur_oracle(alpha, sigma):
    """Direct 2-D convolution with the product kernel, edge-clamped."""
    radius = int(math.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-(t * t) / (2.0 * sigma * sigma))
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    padded = np.pad(alpha.astype(np.float64), radius, mode="edge")
    h, w = alpha.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            out[y, x] = (padded[y : y + 2 * radius + 1, x : x + 2 * radius + 1] * k2).sum()
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def test_smooth_matches_dense_convolution_oracle():
    rng = stream(77, 0)
    alpha = (rng.random((24, 28)) > 0.5).astype(np.uint8) * 255
    img = np.zeros((24, 28, 4), np.uint8)
    img[..., 3] = alpha
    got = smooth_alpha(img, 1.7)[..., 3]
    want = dense_blur_oracle(alpha, 1.7)
    assert np.abs(got.astype(int) - want.astype(int)).max() <= 1


def test_smooth_conserves_mass_away_from_borders():
    fg = disk_rgba(64, 10)
    out = smooth_alpha(fg, 3.0)
    before = fg[..., 3].astype(np.int64).sum()
    after = out[..., 3].astype(np.int64).sum()
    assert abs(after - before) <= 0.01 * before


def test_smooth_rejects_negative_sigma():
    with pytest.raises(DomainError):
        smooth_alpha(disk_rgba(16, 4), -1.0)


# --- composite -------------------------------------------------------------------


def test_composite_binary_alpha_exact_selection():
    rng = stream(78, 0)
    fg = np.zeros((20, 20, 4), np.uint8)
    fg[..., :3] = rng.integers(0, 256, (20, 20, 3))
    fg[..., 3] = (rng.random((20, 20)) > 0.4).astype(np.uint8) * 255
    bg = rng.integers(0, 256, (50, 50, 3)).astype(np.uint8)
    out = composite(fg, bg, (0.5, 0.5))
    top = left = round(0.5 * 30)
    window = out[top : top + 20, left : left + 20]
    opaque = fg[..., 3] == 255
    assert np.array_equal(window[opaque], fg[..., :3][opaque])
    assert np.array_equal(window[~opaque], bg[top : top + 20, left : left + 20][~opaque])
    # untouched outside the paste window
    mask = np.ones((50, 50), bool)
    mask[top : top + 20, left : left + 20] = False
    assert np.array_equal(out[mask], bg[mask])


def test_composite_transparent_is_background():
    fg = np.zeros((10, 10, 4), np.uint8)
    fg[..., :3] = 255
    bg = np.full((30, 30, 3), 77, np.uint8)
    out = composite(fg, bg, (0.3, 0.9))
    assert np.array_equal(out, bg)


def test_composite_placement_arithmetic():
    fg = np.zeros((10, 10, 4), np.uint8)
    fg[..., 0] = 255
    fg[..., 3] = 255
    bg = np.zeros((100, 100, 3), np.uint8)
    out = composite(fg, bg, (0.5, 0.5))
    rows = np.where(out[..., 0].any(axis=1))[0]
    cols = np.where(out[..., 0].any(axis=0))[0]
    assert rows.min() == 45 and rows.max() == 54
    assert cols.min() == 45 and cols.max() == 54


def test_composite_corners():
    fg = np.zeros((10, 10, 4), np.uint8)
    fg[..., 0] = 255
    fg[..., 3] = 255
    bg = np.zeros((100, 100, 3), np.uint8)
    out = composite(fg, bg, (0.0, 0.0))
    assert out[0, 0, 0] == 255 and out[9, 9, 0] == 255 and out[10, 10, 0] == 0
    out = composite(fg, bg, (1.0, 1.0))
    assert out[99, 99, 0] == 255 and out[90, 90, 0] == 255 and out[89, 89, 0] == 0


def test_composite_oversized_foreground_errors():
    fg = np.zeros((60, 60, 4), np.uint8)
    bg = np.zeros((50, 50, 3), np.uint8)
    with pytest.raises(RenderError):
        composite(fg, bg, (0.5, 0.5))


def test_composite_center_domain():
    fg = np.zeros((10, 10, 4), np.uint8)
    bg = np.zeros((50, 50, 3), np.uint8)
    with pytest.raises(DomainError):
        composite(fg, bg, (1.2, 0.5))


# --- place_in_cell ----------------------------------------------------------------


def test_place_center_cell():
    fg = disk_rgba(20, 8)
    bg = np.zeros((224, 224, 3), np.uint8)
    out = place_in_cell(fg, bg, (1, 1))
    ys, xs = np.where(out[..., 0] > 0)
    assert abs((ys.min() + ys.max()) / 2 - 112) <= 1
    assert abs((xs.min() + xs.max()) / 2 - 112) <= 1


def test_place_corner_cell_center():
    fg = disk_rgba(20, 8)
    bg = np.zeros((224, 224, 3), np.uint8)
    out = place_in_cell(fg, bg, (0, 0))
    ys, xs = np.where(out[..., 0] > 0)
    # cell center is (224/6, 224/6) ~ (37.3, 37.3)
    assert abs((ys.min() + ys.max()) / 2 - 37.3) <= 1.5
    assert abs((xs.min() + xs.max()) / 2 - 37.3) <= 1.5


def test_place_clamps_inward():
    fg = disk_rgba(120, 55)  # radius exceeds the corner-cell margin
    bg = np.zeros((224, 224, 3), np.uint8)
    out = place_in_cell(fg, bg, (0, 0))
    ys, xs = np.where(out[..., 0] > 0)
    assert ys.min() >= 0 and xs.min() >= 0  # fully on canvas


def test_place_nine_cells_translation_only():
    fg = disk_rgba(20, 8)
    bg = np.full((225, 225, 3), 10, np.uint8)  # 225 divisible by 3: no clamping
    patches = []
    images = []
    for row in range(3):
        for col in range(3):
            out = place_in_cell(fg, bg, (row, col))
            images.append(out.tobytes())
            cx = int((col + 0.5) * 225 / 3)
            cy = int((row + 0.5) * 225 / 3)
            left = int(math.floor(cx - 10 + 0.5))
            top = int(math.floor(cy - 10 + 0.5))
            patches.append(out[top : top + 20, left : left + 20].copy())
    assert len(set(images)) == 9
    for patch in patches[1:]:
        assert np.array_equal(patch, patches[0])


def test_place_bad_cell():
    with pytest.raises(DomainError):
        place_in_cell(disk_rgba(8, 3), np.zeros((60, 60, 3), np.uint8), (3, 0))


# --- render -----------------------------------------------------------------------


def recombined_plan(manifest, config, epoch=0):
    for i in range(len(manifest.foregrounds)):
        plan = plan_sample(manifest, config, epoch, i)
        if not plan.use_original:
            return plan
    raise AssertionError("no recombined plan found")


def test_render_empty_pipeline_equals_manual_chain(small_corpus):
    manifest, _ = small_corpus
    config = RecombinationConfig(mix_schedule="none", seed=11, total_epochs=2)
    manifest = prune_backgrounds(manifest, config.t_prune)
    plan = recombined_plan(manifest, config)
    fg = cached_rgba(manifest.foreground(plan.fg_id).image_ref)
    bg = cached_rgb(manifest.background(plan.bg_id).image_ref)
    expected = composite(
        smooth_alpha(resize_foreground(fg, plan.size_fraction, bg.shape[1], bg.shape[0]),
                     plan.blur_sigma),
        bg,
        plan.center,
    )
    assert np.array_equal(render(plan, manifest, config, aug_pipeline=[]), expected)


def test_render_deterministic_bytes(small_corpus):
    manifest, _ = small_corpus
    config = RecombinationConfig(mix_schedule="none", seed=12, total_epochs=2,
                                 stages=("crop", "flip", "jitter"))
    manifest = prune_backgrounds(manifest, config.t_prune)
    for i in range(4):
        plan = plan_sample(manifest, config, 1, i)
        a = render(plan, manifest, config)
        b = render(plan, manifest, config)
        assert np.array_equal(a, b)


def test_render_aug_orders_agree_on_empty_pipeline(small_corpus):
    manifest, _ = small_corpus
    base = dict(mix_schedule="none", seed=13, total_epochs=1)
    manifest = prune_backgrounds(manifest, 0.8)
    cfg_paste = RecombinationConfig(aug_order="paste_crop_color", **base)
    cfg_crop = RecombinationConfig(aug_order="crop_paste_color", **base)
    for i in range(3):
        a = render(plan_sample(manifest, cfg_paste, 0, i), manifest, cfg_paste, aug_pipeline=[])
        b = render(plan_sample(manifest, cfg_crop, 0, i), manifest, cfg_crop, aug_pipeline=[])
        assert np.array_equal(a, b)


def test_render_crop_paste_keeps_foreground_fully_visible(tmp_path):
    # magenta square on gray backgrounds; after crop_paste the full interior
    # of the pasted foreground must be present in the output
    from fgbg.assets import BackgroundAsset, ForegroundAsset
    from fgbg.images import save_image

    size = 120
    fg_img = square_rgba(size, 60)
    bg_img = np.full((size, size, 3), 90, np.uint8)
    save_image(tmp_path / "fg.png", fg_img)
    save_image(tmp_path / "bg.png", bg_img)
    frac = opaque_count(fg_img) / (size * size)
    manifest = make_manifest(
        [ForegroundAsset("f0", 0, str(tmp_path / "fg.png"), frac, "s0")],
        [BackgroundAsset("b0", 0, str(tmp_path / "bg.png"), frac, 0.1, "s0")],
    )
    config = RecombinationConfig(
        aug_order="crop_paste_color", mix_schedule="none", sigma_max=0.0,
        seed=21, total_epochs=1, stages=("crop",),
    )
    for epoch_seed in range(5):
        cfg = RecombinationConfig(**{**config.__dict__, "seed": epoch_seed})
        plan = plan_sample(manifest, cfg, 0, 0)
        fg_resized = resize_foreground(fg_img, plan.size_fraction, size, size)
        expected_interior = int((fg_resized[..., 3] == 255).sum())
        out = render(plan, manifest, cfg)
        magenta = (out[..., 0] == 255) & (out[..., 1] == 0) & (out[..., 2] == 255)
        assert int(magenta.sum()) == expected_interior


def test_render_original_reconstructs_source(small_corpus):
    manifest, _ = small_corpus
    config = RecombinationConfig(mix_schedule="constant", mix_p=1.0, seed=14, total_epochs=1)
    manifest = prune_backgrounds(manifest, config.t_prune)
    plan = plan_sample(manifest, config, 0, 0)
    assert plan.use_original
    out = render(plan, manifest, config, aug_pipeline=[])
    fg_asset = manifest.foreground(plan.fg_id)
    fg = cached_rgba(fg_asset.image_ref)
    bg = cached_rgb(manifest.background_for_source(fg_asset.source_image_id).image_ref)
    opaque = fg[..., 3] == 255
    assert np.array_equal(out[opaque], fg[..., :3][opaque])
    assert np.array_equal(out[~opaque], bg[~opaque])  # synthetic alpha is binary


def test_render_grid_cell_plan(small_corpus):
    manifest, _ = small_corpus
    config = RecombinationConfig(mix_schedule="none", seed=15, total_epochs=1)
    manifest = prune_backgrounds(manifest, config.t_prune)
    base = plan_sample(manifest, config, 0, 0)
    from dataclasses import replace

    plan = replace(base, grid_cell=(2, 0), center=None)
    out = render(plan, manifest, config, aug_pipeline=[])
    assert out.shape == (160, 160, 3)


def test_stage_kinds():
    stages = stages_from_names(("crop", "flip", "jitter"))
    assert [s.kind for s in stages] == ["geometric_crop", "geometric_crop", "color"]
    with pytest.raises(DomainError):
        stages_from_names(("unknown",))


def test_color_stage_preserves_dims(small_corpus):
    jitter = stages_from_names(("jitter",))[0]
    img = np.full((40, 60, 3), 120, np.uint8)
    out = jitter.fn(img, stream(1, 2, 3))
    assert out.shape == img.shape
