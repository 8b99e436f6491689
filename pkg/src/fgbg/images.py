"""Image file I/O. Foregrounds are 8-bit RGBA PNG with straight alpha;
backgrounds are 8-bit RGB (PNG or JPEG). Arrays are HxWxC uint8."""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import RenderError


def load_rgba(path: str | Path) -> np.ndarray:
    """Load a straight-alpha RGBA image as (H, W, 4) uint8."""
    try:
        with Image.open(path) as im:
            if im.mode != "RGBA":
                raise RenderError(f"{path}: expected RGBA, got mode {im.mode}")
            arr = np.asarray(im, dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise RenderError(f"{path}: cannot decode image: {exc}") from exc
    return arr


def load_rgb(path: str | Path) -> np.ndarray:
    """Load an RGB image as (H, W, 3) uint8."""
    try:
        with Image.open(path) as im:
            if im.mode != "RGB":
                raise RenderError(f"{path}: expected RGB, got mode {im.mode}")
            arr = np.asarray(im, dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise RenderError(f"{path}: cannot decode image: {exc}") from exc
    return arr


def save_image(path: str | Path, arr: np.ndarray) -> None:
    """Write uint8 RGB/RGBA pixels; format chosen by file suffix."""
    path = Path(path)
    mode = {3: "RGB", 4: "RGBA"}.get(arr.shape[2] if arr.ndim == 3 else 0)
    if mode is None:
        raise RenderError(f"cannot save array of shape {arr.shape}")
    im = Image.fromarray(arr, mode)
    if path.suffix.lower() in (".jpg", ".jpeg"):
        im.save(path, quality=95)
    else:
        im.save(path)


# Render hot path re-reads the same assets across an epoch; this is a
# read-through cache, safe for concurrent readers (arrays are frozen).
@lru_cache(maxsize=256)
def _cached(path: str, kind: str) -> np.ndarray:
    arr = load_rgba(path) if kind == "rgba" else load_rgb(path)
    arr.setflags(write=False)
    return arr


def cached_rgba(path: str | Path) -> np.ndarray:
    return _cached(str(path), "rgba")


def cached_rgb(path: str | Path) -> np.ndarray:
    return _cached(str(path), "rgb")
