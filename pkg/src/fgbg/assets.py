"""Asset corpus: foreground cutouts, inpainted backgrounds, and the manifest
that indexes them.

A foreground asset is a full-frame RGBA image at the resolution of its
source photo: the object sits at its original location and everything else
is transparent. Its paired background is that same photo with the object
removed and the hole inpainted. The pair shares a source_image_id, which is
also what lets the engine reconstruct the untouched source image (foreground
composited back over its own background at identity placement).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ManifestError
from .images import load_rgb, load_rgba

SCHEMA_VERSION = 1

# Opaque means alpha strictly above one half (129/255 ... 255/255 in 8-bit).
OPAQUE_THRESHOLD = 128


@dataclass(frozen=True)
class ForegroundAsset:
    id: str
    class_id: int
    image_ref: str
    orig_size_fraction: float  # opaque px / total px of the source image
    source_image_id: str


@dataclass(frozen=True)
class BackgroundAsset:
    id: str
    class_id: int
    image_ref: str
    orig_fg_size_fraction: float  # size fraction of the removed foreground
    infill_ratio: float  # fraction of pixels produced by inpainting
    source_image_id: str


@dataclass(frozen=True)
class AssetManifest:
    foregrounds: tuple[ForegroundAsset, ...]
    backgrounds: tuple[BackgroundAsset, ...]
    class_index: dict[int, tuple[str, ...]] = field(compare=False)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "_fg_by_id", {a.id: a for a in self.foregrounds})
        object.__setattr__(self, "_bg_by_id", {a.id: a for a in self.backgrounds})
        object.__setattr__(
            self, "_bg_by_source", {a.source_image_id: a for a in self.backgrounds}
        )

    def foreground(self, fg_id: str) -> ForegroundAsset:
        try:
            return self._fg_by_id[fg_id]
        except KeyError:
            raise ManifestError(f"unknown foreground id {fg_id!r}") from None

    def background(self, bg_id: str) -> BackgroundAsset:
        try:
            return self._bg_by_id[bg_id]
        except KeyError:
            raise ManifestError(f"unknown background id {bg_id!r}") from None

    def background_for_source(self, source_image_id: str) -> BackgroundAsset | None:
        """The background derived from the same source image, if it survived
        pruning."""
        return self._bg_by_source.get(source_image_id)


def _build_class_index(backgrounds) -> dict[int, tuple[str, ...]]:
    index: dict[int, list[str]] = {}
    for bg in backgrounds:
        index.setdefault(bg.class_id, []).append(bg.id)
    return {c: tuple(ids) for c, ids in sorted(index.items())}


def make_manifest(foregrounds, backgrounds) -> AssetManifest:
    """Assemble a manifest with a freshly built class index, sorted by id."""
    fgs = tuple(sorted(foregrounds, key=lambda a: a.id))
    bgs = tuple(sorted(backgrounds, key=lambda a: a.id))
    return AssetManifest(fgs, bgs, _build_class_index(bgs))


SIDECAR_FIELDS = ("id", "kind", "class_id", "source_image_id", "size_fraction")


def _check_image_header(path: Path, want_mode: str, asset_id: str) -> None:
    if not path.exists():
        raise ManifestError(f"asset {asset_id!r}: image file missing: {path}")
    try:
        with Image.open(path) as im:
            mode = im.mode
    except (OSError, SyntaxError) as exc:
        raise ManifestError(f"asset {asset_id!r}: undecodable image {path}: {exc}") from exc
    if mode != want_mode:
        raise ManifestError(
            f"asset {asset_id!r}: image {path} has mode {mode}, expected {want_mode}"
        )


def _find_image(root: Path, asset_id: str, suffixes) -> Path | None:
    for suffix in suffixes:
        p = root / f"{asset_id}{suffix}"
        if p.exists():
            return p
    return None


def build_manifest(fg_root: str | Path, bg_root: str | Path, sidecar: str | Path) -> AssetManifest:
    """Index an asset corpus from its image roots and sidecar metadata.

    The sidecar is a JSONL file with one record per asset:
    id, kind ("foreground"|"background"), class_id, source_image_id,
    size_fraction, and (backgrounds only) infill_ratio. Image files are
    looked up as <root>/<id>.png (backgrounds may also be .jpg/.jpeg).
    """
    fg_root, bg_root = Path(fg_root), Path(bg_root)
    foregrounds: list[ForegroundAsset] = []
    backgrounds: list[BackgroundAsset] = []
    seen: set[str] = set()

    with open(sidecar, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{sidecar}:{lineno}: invalid sidecar record: {exc}") from exc
            missing = [f for f in SIDECAR_FIELDS if f not in rec]
            if missing:
                raise ManifestError(
                    f"{sidecar}:{lineno}: asset {rec.get('id', '?')!r} missing fields {missing}"
                )
            asset_id = str(rec["id"])
            if asset_id in seen:
                raise ManifestError(f"duplicate asset id {asset_id!r}")
            seen.add(asset_id)
            kind = rec["kind"]
            if kind == "foreground":
                path = _find_image(fg_root, asset_id, (".png",))
                if path is None:
                    raise ManifestError(f"asset {asset_id!r}: image file missing under {fg_root}")
                _check_image_header(path, "RGBA", asset_id)
                foregrounds.append(
                    ForegroundAsset(
                        id=asset_id,
                        class_id=int(rec["class_id"]),
                        image_ref=str(path),
                        orig_size_fraction=float(rec["size_fraction"]),
                        source_image_id=str(rec["source_image_id"]),
                    )
                )
            elif kind == "background":
                if "infill_ratio" not in rec:
                    raise ManifestError(
                        f"{sidecar}:{lineno}: asset {asset_id!r} missing fields ['infill_ratio']"
                    )
                path = _find_image(bg_root, asset_id, (".png", ".jpg", ".jpeg"))
                if path is None:
                    raise ManifestError(f"asset {asset_id!r}: image file missing under {bg_root}")
                _check_image_header(path, "RGB", asset_id)
                backgrounds.append(
                    BackgroundAsset(
                        id=asset_id,
                        class_id=int(rec["class_id"]),
                        image_ref=str(path),
                        orig_fg_size_fraction=float(rec["size_fraction"]),
                        infill_ratio=float(rec["infill_ratio"]),
                        source_image_id=str(rec["source_image_id"]),
                    )
                )
            else:
                raise ManifestError(f"{sidecar}:{lineno}: unknown asset kind {kind!r}")

    if not foregrounds and not backgrounds:
        raise ManifestError("no assets")
    return make_manifest(foregrounds, backgrounds)


def prune_backgrounds(manifest: AssetManifest, t_prune: float) -> AssetManifest:
    """Drop backgrounds whose infill_ratio exceeds t_prune (strictly).

    A background exactly at the threshold is kept. Errors if any class that
    had backgrounds would be left with none.
    """
    if not 0.0 < t_prune <= 1.0:
        raise ManifestError(f"t_prune must be in (0, 1], got {t_prune}")
    kept = tuple(bg for bg in manifest.backgrounds if bg.infill_ratio <= t_prune)
    kept_classes = {bg.class_id for bg in kept}
    emptied = sorted(set(manifest.class_index) - kept_classes)
    if emptied:
        raise ManifestError(f"pruning at t_prune={t_prune} empties classes {emptied}")
    return AssetManifest(
        manifest.foregrounds, kept, _build_class_index(kept), manifest.schema_version
    )


@dataclass(frozen=True)
class ValidationIssue:
    asset_id: str  # "" for manifest-level issues
    message: str

    def __str__(self):
        return f"{self.asset_id or '<manifest>'}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[ValidationIssue, ...]

    @property
    def ok(self) -> bool:
        return not self.issues

    def __str__(self):
        return "\n".join(str(i) for i in self.issues) if self.issues else "ok"


def validate(manifest: AssetManifest, check_pixels: bool = True) -> ValidationReport:
    """Scan the manifest (and, unless disabled, every image) for contract
    violations. Violations are report entries, never exceptions."""
    issues: list[ValidationIssue] = []

    def bad(asset_id: str, msg: str):
        issues.append(ValidationIssue(asset_id, msg))

    seen: set[str] = set()
    for a in list(manifest.foregrounds) + list(manifest.backgrounds):
        if a.id in seen:
            bad(a.id, "duplicate asset id")
        seen.add(a.id)

    fg_sources: dict[str, int] = {}
    for fg in manifest.foregrounds:
        fg_sources[fg.source_image_id] = fg_sources.get(fg.source_image_id, 0) + 1
        if not 0.0 < fg.orig_size_fraction <= 1.0:
            bad(fg.id, f"orig_size_fraction {fg.orig_size_fraction} outside (0, 1]")
    for src, n in fg_sources.items():
        if n > 1:
            bad("", f"source_image_id {src!r} links {n} foregrounds")

    bg_sources: dict[str, int] = {}
    for bg in manifest.backgrounds:
        bg_sources[bg.source_image_id] = bg_sources.get(bg.source_image_id, 0) + 1
        if not 0.0 <= bg.infill_ratio <= 1.0:
            bad(bg.id, f"infill_ratio {bg.infill_ratio} outside [0, 1]")
        if not 0.0 < bg.orig_fg_size_fraction <= 1.0:
            bad(bg.id, f"orig_fg_size_fraction {bg.orig_fg_size_fraction} outside (0, 1]")
    for src, n in bg_sources.items():
        if n > 1:
            bad("", f"source_image_id {src!r} links {n} backgrounds")

    want_index = _build_class_index(manifest.backgrounds)
    if manifest.class_index != want_index:
        bad("", "class_index does not match the classes present in backgrounds")

    if check_pixels:
        dims: dict[str, tuple[int, int]] = {}
        for fg in manifest.foregrounds:
            try:
                arr = load_rgba(fg.image_ref)
            except Exception as exc:
                bad(fg.id, f"cannot load image: {exc}")
                continue
            dims[fg.source_image_id] = arr.shape[:2]
            if not (arr[..., 3] >= OPAQUE_THRESHOLD).any():
                bad(fg.id, "alpha channel has no pixel above 0.5")
        for bg in manifest.backgrounds:
            try:
                arr = load_rgb(bg.image_ref)
            except Exception as exc:
                bad(bg.id, f"cannot load image: {exc}")
                continue
            want = dims.get(bg.source_image_id)
            if want is not None and arr.shape[:2] != want:
                bad(bg.id, f"dimensions {arr.shape[:2]} differ from linked foreground {want}")

    return ValidationReport(tuple(issues))


# --- serialization: one JSONL file per asset kind, header line first -------

_FG_FILE = "foregrounds.jsonl"
_BG_FILE = "backgrounds.jsonl"


def save_manifest(manifest: AssetManifest, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / _FG_FILE, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema_version": manifest.schema_version, "kind": "foreground"}) + "\n")
        for a in manifest.foregrounds:
            fh.write(
                json.dumps(
                    {
                        "id": a.id,
                        "class_id": a.class_id,
                        "image_ref": a.image_ref,
                        "orig_size_fraction": a.orig_size_fraction,
                        "source_image_id": a.source_image_id,
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )
    with open(out_dir / _BG_FILE, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema_version": manifest.schema_version, "kind": "background"}) + "\n")
        for a in manifest.backgrounds:
            fh.write(
                json.dumps(
                    {
                        "id": a.id,
                        "class_id": a.class_id,
                        "image_ref": a.image_ref,
                        "orig_fg_size_fraction": a.orig_fg_size_fraction,
                        "infill_ratio": a.infill_ratio,
                        "source_image_id": a.source_image_id,
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )
    return out_dir


def _read_asset_file(path: Path, want_kind: str) -> list[dict]:
    if not path.exists():
        raise ManifestError(f"manifest file missing: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ManifestError(f"{path}: empty manifest file")
    header = json.loads(lines[0])
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ManifestError(
            f"{path}: schema_version {header.get('schema_version')} unsupported "
            f"(expected {SCHEMA_VERSION})"
        )
    if header.get("kind") != want_kind:
        raise ManifestError(f"{path}: kind {header.get('kind')!r}, expected {want_kind!r}")
    return [json.loads(ln) for ln in lines[1:]]


def load_manifest(manifest_dir: str | Path) -> AssetManifest:
    manifest_dir = Path(manifest_dir)
    fgs = [
        ForegroundAsset(
            id=r["id"],
            class_id=int(r["class_id"]),
            image_ref=r["image_ref"],
            orig_size_fraction=float(r["orig_size_fraction"]),
            source_image_id=r["source_image_id"],
        )
        for r in _read_asset_file(manifest_dir / _FG_FILE, "foreground")
    ]
    bgs = [
        BackgroundAsset(
            id=r["id"],
            class_id=int(r["class_id"]),
            image_ref=r["image_ref"],
            orig_fg_size_fraction=float(r["orig_fg_size_fraction"]),
            infill_ratio=float(r["infill_ratio"]),
            source_image_id=r["source_image_id"],
        )
        for r in _read_asset_file(manifest_dir / _BG_FILE, "background")
    ]
    return make_manifest(fgs, bgs)
