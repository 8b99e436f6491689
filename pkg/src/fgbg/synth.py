"""Synthetic desk-scale asset corpus with exactly known ground truth.

Foregrounds are flat-colored geometric shapes (binary alpha) on otherwise
transparent full-frame canvases; backgrounds are noisy gradients. Each
class gets its own foreground hue, shape, and background hue family, so the
original pairings carry a strong background shortcut that recombination
breaks — useful both for pipeline tests and for training demos.
"""

from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np

from .assets import AssetManifest, build_manifest, save_manifest
from .errors import DomainError
from .images import save_image
from .records import write_records
from .seeding import TAG_SYNTH, stream

SHAPES = ("disk", "square", "triangle", "ring", "diamond")


def _hsv_rgb(h: float, s: float, v: float) -> np.ndarray:
    return np.array([int(round(255 * c)) for c in colorsys.hsv_to_rgb(h % 1.0, s, v)], np.uint8)


def _shape_mask(shape: str, size: int, frac: float, cx: float, cy: float) -> np.ndarray:
    """Rasterize a shape with target area frac*size^2 centered at (cx, cy)."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    xx += 0.5 - cx
    yy += 0.5 - cy
    area = frac * size * size
    if shape == "disk":
        r = np.sqrt(area / np.pi)
        return xx * xx + yy * yy <= r * r
    if shape == "square":
        # tilted 15 degrees: perfectly axis-aligned edges are unlike real
        # segmentation masks and snap hard under resize thresholding
        half = np.sqrt(area) / 2.0
        c, s = np.cos(np.pi / 12), np.sin(np.pi / 12)
        u = xx * c + yy * s
        v = -xx * s + yy * c
        return (np.abs(u) <= half) & (np.abs(v) <= half)
    if shape == "triangle":
        # upright isoceles triangle, width = height
        side = np.sqrt(2.0 * area)
        return (yy >= -side / 2) & (yy <= side / 2) & (np.abs(xx) <= (yy + side / 2) / 2)
    if shape == "ring":
        r_out = np.sqrt(area / (np.pi * (1.0 - 0.36)))
        d2 = xx * xx + yy * yy
        return (d2 <= r_out * r_out) & (d2 >= (0.6 * r_out) ** 2)
    if shape == "diamond":
        half = np.sqrt(area / 2.0)
        return np.abs(xx) + np.abs(yy) <= half
    raise DomainError(f"unknown shape {shape!r}")


def _background_texture(size: int, hue: float, rng: np.random.Generator) -> np.ndarray:
    lo = _hsv_rgb(hue + float(rng.uniform(-0.03, 0.03)), 0.55, 0.45).astype(np.float64)
    hi = _hsv_rgb(hue + float(rng.uniform(-0.03, 0.03)), 0.7, 0.92).astype(np.float64)
    t = np.linspace(0.0, 1.0, size)[:, None, None]
    if rng.random() < 0.5:
        grad = lo[None, None, :] * (1 - t) + hi[None, None, :] * t  # vertical
    else:
        grad = np.swapaxes(lo[None, None, :] * (1 - t) + hi[None, None, :] * t, 0, 1)
    noise = rng.uniform(-12.0, 12.0, size=(size, size, 1))
    return np.clip(np.floor(grad + noise + 0.5), 0, 255).astype(np.uint8)


def generate_corpus(
    out_dir: str | Path,
    n_classes: int,
    n_per_class: int,
    seed: int,
    size: int = 224,
    infill_max: float = 0.6,
) -> AssetManifest:
    """Write a complete asset corpus (images + sidecar + manifest files) and
    return the built manifest.

    Per class: foreground hue k/n, background hue (k+0.5)/n, shape cycling
    through the built-in list. orig_size_fraction is the exact opaque pixel
    count over size^2; infill ratios are drawn uniformly on [0, infill_max].
    """
    if n_classes < 1 or n_per_class < 1:
        raise DomainError("need at least one class and one sample per class")
    out_dir = Path(out_dir)
    fg_dir = out_dir / "foregrounds"
    bg_dir = out_dir / "backgrounds"
    fg_dir.mkdir(parents=True, exist_ok=True)
    bg_dir.mkdir(parents=True, exist_ok=True)

    sidecar: list[dict] = []
    for c in range(n_classes):
        fg_hue = c / n_classes
        bg_hue = (c + 0.5) / n_classes
        shape = SHAPES[c % len(SHAPES)]
        for i in range(n_per_class):
            rng = stream(seed, TAG_SYNTH, c, i)
            frac = float(rng.uniform(0.06, 0.18))
            margin = 0.25 * size
            cx = float(rng.uniform(margin, size - margin))
            cy = float(rng.uniform(margin, size - margin))
            mask = _shape_mask(shape, size, frac, cx, cy)
            color = _hsv_rgb(fg_hue + float(rng.uniform(-0.02, 0.02)), 0.85, 0.95)

            fg = np.zeros((size, size, 4), np.uint8)
            fg[..., :3] = color
            fg[..., 3] = np.where(mask, 255, 0)
            bg = _background_texture(size, bg_hue, rng)
            infill = float(rng.uniform(0.0, infill_max))

            stem = f"c{c:03d}_{i:04d}"
            save_image(fg_dir / f"{stem}_fg.png", fg)
            save_image(bg_dir / f"{stem}_bg.png", bg)
            exact_frac = float(mask.sum()) / (size * size)
            sidecar.append(
                {
                    "id": f"{stem}_fg",
                    "kind": "foreground",
                    "class_id": c,
                    "source_image_id": f"src_{stem}",
                    "size_fraction": exact_frac,
                }
            )
            sidecar.append(
                {
                    "id": f"{stem}_bg",
                    "kind": "background",
                    "class_id": c,
                    "source_image_id": f"src_{stem}",
                    "size_fraction": exact_frac,
                    "infill_ratio": infill,
                }
            )

    sidecar_path = out_dir / "sidecar.jsonl"
    write_records(sidecar_path, sidecar)
    manifest = build_manifest(fg_dir, bg_dir, sidecar_path)
    save_manifest(manifest, out_dir / "manifest")
    return manifest
