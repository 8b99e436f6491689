"""Command-line surface.

Exit codes: 0 success, 1 domain failure (bad data, violated contracts),
2 I/O or usage failure. Every run that writes an output directory echoes
its fully resolved configuration there, so results are reproducible from
the output alone.
"""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from .assets import load_manifest, prune_backgrounds, save_manifest, validate
from .compositor import render
from .distributions import BatesParam, bates_pdf
from .errors import FgbgError, RecordError, VariantError
from .images import save_image
from .metrics import (
    BiasReport,
    accuracy,
    background_robustness,
    cell_accuracies,
    center_bias,
    foreground_focus,
    probe_set,
    read_eval_records,
    read_importance,
    read_mask_png,
    size_bias_curve,
)
from .recombiner import (
    RecombinationConfig,
    load_config,
    plan_epoch,
    plan_sample,
    plan_to_dict,
    save_config,
)
from .records import read_records, write_records
from .synth import generate_corpus
from .variants import ScoreParams, VariantCandidate, select_best_variant, variant_score


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except FgbgError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except OSError as exc:
            click.echo(f"io error: {exc}", err=True)
            sys.exit(2)

    return wrapper


_CONFIG_FLAGS = (
    ("bg_strategy", str),
    ("size_strategy", str),
    ("size_band", float),
    ("eta", int),
    ("sigma_max", float),
    ("mix_schedule", str),
    ("mix_p", float),
    ("aug_order", str),
    ("t_prune", float),
    ("total_epochs", int),
    ("seed", int),
)


def config_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                      help="key=value config file; flags override it")(fn)
    for name, typ in reversed(_CONFIG_FLAGS):
        flag = "--" + name.replace("_", "-")
        fn = click.option(flag, name, type=typ, default=None)(fn)
    fn = click.option("--stages", "stages", type=str, default=None,
                      help="comma list of built-in stages (crop,flip,jitter)")(fn)
    return fn


def resolve_config(kwargs: dict) -> RecombinationConfig:
    config_path = kwargs.pop("config_path", None)
    config = load_config(config_path) if config_path else RecombinationConfig()
    overrides = {}
    for name, _ in _CONFIG_FLAGS:
        value = kwargs.pop(name, None)
        if value is not None:
            overrides[name] = value
    stages = kwargs.pop("stages", None)
    if stages is not None:
        overrides["stages"] = tuple(s for s in stages.split(",") if s)
    return dataclasses.replace(config, **overrides) if overrides else config


def echo_config(config: RecombinationConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, out_dir / "config.txt")


@click.group()
def cli():
    """Foreground/background recombination engine."""


@cli.command("validate")
@click.argument("manifest_dir", type=click.Path())
def cmd_validate(manifest_dir):
    """Check a manifest (and its images) against the data contract."""
    try:
        manifest = load_manifest(manifest_dir)
    except (FgbgError, OSError, json.JSONDecodeError) as exc:
        click.echo(f"cannot read manifest: {exc}", err=True)
        sys.exit(2)
    report = validate(manifest)
    if report.ok:
        click.echo("ok")
        sys.exit(0)
    for issue in report.issues:
        click.echo(str(issue))
    sys.exit(1)


@cli.command("prune")
@click.argument("manifest_dir", type=click.Path(exists=True))
@click.option("--t-prune", type=float, default=0.8, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@guarded
def cmd_prune(manifest_dir, t_prune, out_dir):
    """Drop backgrounds whose infill ratio exceeds the threshold."""
    manifest = load_manifest(manifest_dir)
    pruned = prune_backgrounds(manifest, t_prune)
    save_manifest(pruned, out_dir)
    click.echo(
        f"kept {len(pruned.backgrounds)}/{len(manifest.backgrounds)} backgrounds "
        f"at t_prune={t_prune}"
    )


@cli.command("plan")
@click.argument("manifest_dir", type=click.Path(exists=True))
@click.option("--epoch", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@config_options
@guarded
def cmd_plan(manifest_dir, epoch, out_path, **kwargs):
    """Write the fully resolved plan records for one epoch."""
    config = resolve_config(kwargs)
    manifest = prune_backgrounds(load_manifest(manifest_dir), config.t_prune)
    ep = plan_epoch(manifest, config, epoch)
    n = write_records(out_path, (plan_to_dict(p) for p in ep.plans))
    click.echo(f"wrote {n} plans for epoch {epoch} to {out_path}")


# --- generate ----------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(manifest_dir: str, config: RecombinationConfig, out_dir: str, fmt: str):
    _WORKER["manifest"] = prune_backgrounds(load_manifest(manifest_dir), config.t_prune)
    _WORKER["config"] = config
    _WORKER["out"] = Path(out_dir)
    _WORKER["fmt"] = fmt


def _render_item(item: tuple[int, int]) -> str:
    epoch, index = item
    manifest, config = _WORKER["manifest"], _WORKER["config"]
    plan = plan_sample(manifest, config, epoch, index)
    img = render(plan, manifest, config)
    path = _WORKER["out"] / str(epoch) / f"{index}_{plan.fg_id}.{_WORKER['fmt']}"
    save_image(path, img)
    return str(path)


def run_generate(
    manifest_dir: str,
    config: RecombinationConfig,
    out_dir: str | Path,
    epochs: range,
    workers: int = 1,
    fmt: str = "png",
    progress=None,
) -> int:
    """Render whole epochs to disk; returns the number of images written.

    Reproducible: identical (manifest, config, epochs) produce identical
    bytes regardless of worker count or interleaving.
    """
    out_dir = Path(out_dir)
    manifest = prune_backgrounds(load_manifest(manifest_dir), config.t_prune)
    n_fg = len(manifest.foregrounds)
    items: list[tuple[int, int]] = []
    for epoch in epochs:
        (out_dir / str(epoch)).mkdir(parents=True, exist_ok=True)
        ep = plan_epoch(manifest, config, epoch)
        write_records(out_dir / str(epoch) / "plans.jsonl", (plan_to_dict(p) for p in ep.plans))
        items.extend((epoch, i) for i in range(n_fg))

    done = 0
    started = time.perf_counter()
    try:
        if workers <= 1:
            _init_worker(str(manifest_dir), config, str(out_dir), fmt)
            for item in items:
                _render_item(item)
                done += 1
                if progress:
                    progress(done, len(items))
        else:
            with ProcessPoolExecutor(
                max_workers=workers,
                initializer=_init_worker,
                initargs=(str(manifest_dir), config, str(out_dir), fmt),
            ) as pool:
                for _ in pool.map(_render_item, items, chunksize=8):
                    done += 1
                    if progress:
                        progress(done, len(items))
    except OSError as exc:
        # partial output: record where to pick up (first item not known
        # complete; completed items rewrite identically on resume)
        epoch, index = items[done] if done < len(items) else items[-1]
        token = {"next_epoch": epoch, "next_index": index, "reason": str(exc)}
        try:
            with open(out_dir / "resume.json", "w", encoding="utf-8") as fh:
                json.dump(token, fh)
        except OSError:
            pass  # resume file may itself fail on a full disk
        raise OSError(
            f"generate interrupted ({exc}); partial output under {out_dir}, "
            f"resume from epoch {epoch} index {index}"
        ) from exc
    elapsed = time.perf_counter() - started
    if progress:
        progress(done, len(items), final_rate=done / elapsed if elapsed > 0 else float("inf"))
    return done


@cli.command("generate")
@click.argument("manifest_dir", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--epochs", "epochs_spec", type=str, default="0:1", show_default=True,
              help="epoch range start:stop")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["png", "jpeg"]), default="png")
@config_options
@guarded
def cmd_generate(manifest_dir, out_dir, epochs_spec, workers, fmt, **kwargs):
    """Materialize rendered epochs to disk (images + plan records)."""
    config = resolve_config(kwargs)
    out_dir = Path(out_dir)
    echo_config(config, out_dir)
    start, _, stop = epochs_spec.partition(":")
    epochs = range(int(start), int(stop) if stop else int(start) + 1)

    def progress(done, total, final_rate=None):
        if final_rate is not None:
            click.echo(f"done: {done} images, {final_rate:.1f} images/s")
        elif done % max(1, total // 10) == 0:
            click.echo(f"{done}/{total}")

    n = run_generate(manifest_dir, config, out_dir, epochs, workers, fmt, progress)
    click.echo(f"wrote {n} images under {out_dir}")


@cli.command("score-variants")
@click.argument("candidates", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--lam", type=float, default=2.0, show_default=True)
@click.option("--eps", type=float, default=0.1, show_default=True)
@guarded
def cmd_score_variants(candidates, out_path, lam, eps):
    """Score candidate foreground/background splits and pick one per image.

    Input records: image_id, fg_probs, bg_probs, and either fg_size+bg_size
    or mask_ref (a grayscale PNG whose bright pixels are the foreground).
    """
    params = ScoreParams(lam=lam, eps=eps)
    groups: dict[str, list[VariantCandidate]] = {}
    order: list[str] = []
    for i, rec in enumerate(read_records(candidates), start=1):
        try:
            if "fg_size" in rec and "bg_size" in rec:
                fg_size, bg_size = int(rec["fg_size"]), int(rec["bg_size"])
            else:
                mask = read_mask_png(rec["mask_ref"])
                fg_size, bg_size = int(mask.sum()), int(mask.size)
            cand = VariantCandidate(
                fg_probs=tuple(float(p) for p in rec["fg_probs"]),
                bg_probs=tuple(float(p) for p in rec["bg_probs"]),
                fg_size=fg_size,
                bg_size=bg_size,
            )
            image_id = str(rec["image_id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordError(f"{candidates}:{i}: bad candidate record: {exc}") from exc
        if image_id not in groups:
            groups[image_id] = []
            order.append(image_id)
        groups[image_id].append(cand)

    results = []
    for image_id in order:
        cands = groups[image_id]
        scores = [variant_score(c, params) for c in cands]
        try:
            selected = select_best_variant(cands, params)
        except VariantError as exc:
            raise VariantError(f"image {image_id}: {exc}") from exc
        results.append(
            {
                "image_id": image_id,
                "scores": [s if s > -np.inf else None for s in scores],
                "selected": selected,
            }
        )
        click.echo(f"{image_id}: selected variant {selected}")
    write_records(out_path, results)


# --- metrics -----------------------------------------------------------------


def _write_report(report: BiasReport, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)


@cli.group("metrics")
def metrics_group():
    """Compute bias metrics from record files."""


@metrics_group.command("bg")
@click.option("--all-records", "all_path", type=click.Path(exists=True), required=True)
@click.option("--same-records", "same_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@guarded
def cmd_metrics_bg(all_path, same_path, out_dir):
    """Background robustness: Acc(all backgrounds) / Acc(same class)."""
    records_all = read_eval_records(all_path)
    records_same = read_eval_records(same_path)
    value = background_robustness(records_all, records_same)
    report = BiasReport(
        background_robustness=value,
        sample_counts={"all": len(records_all), "same_class": len(records_same)},
    )
    out_dir = Path(out_dir)
    _write_report(report, out_dir)
    with open(out_dir / "background_robustness.csv", "w", encoding="utf-8") as fh:
        fh.write("metric,value\n")
        fh.write(f"acc_all,{accuracy(records_all)}\n")
        fh.write(f"acc_same,{accuracy(records_same)}\n")
        fh.write(f"background_robustness,{value}\n")
    click.echo(f"background robustness: {value:.4f}")


@metrics_group.command("focus")
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True,
              help="JSONL records with importance and mask paths")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@guarded
def cmd_metrics_focus(pairs_path, out_dir):
    """Foreground focus averaged over (importance map, mask) pairs."""
    values = []
    rows = []
    for rec in read_records(pairs_path):
        imp = read_importance(rec["importance"])
        mask = read_mask_png(rec["mask"])
        value = foreground_focus(imp, mask)
        values.append(value)
        rows.append((rec.get("sample_id", rec["importance"]), value))
    if not values:
        raise RecordError(f"{pairs_path}: no pairs")
    mean_focus = float(np.mean(values))
    report = BiasReport(foreground_focus=mean_focus, sample_counts={"pairs": len(values)})
    out_dir = Path(out_dir)
    _write_report(report, out_dir)
    with open(out_dir / "foreground_focus.csv", "w", encoding="utf-8") as fh:
        fh.write("sample_id,foreground_focus\n")
        for sid, value in rows:
            fh.write(f"{sid},{value}\n")
        fh.write(f"mean,{mean_focus}\n")
    click.echo(f"foreground focus: {mean_focus:.4f} over {len(values)} images")


@metrics_group.command("center")
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@guarded
def cmd_metrics_center(records_path, out_dir):
    """Center bias from grid-cell-conditioned records."""
    records = read_eval_records(records_path)
    grid = cell_accuracies(records)
    bias = center_bias(grid)
    rel = (grid / grid[1][1]).tolist()
    counts: dict[str, int] = {}
    for r in records:
        key = f"cell:{r.condition_value[0]},{r.condition_value[1]}"
        counts[key] = counts.get(key, 0) + 1
    report = BiasReport(center_bias=bias, cell_grid=rel, sample_counts=counts)
    out_dir = Path(out_dir)
    _write_report(report, out_dir)
    with open(out_dir / "cell_grid.csv", "w", encoding="utf-8") as fh:
        fh.write("row,col,accuracy,relative_to_center\n")
        for row in range(3):
            for col in range(3):
                fh.write(f"{row},{col},{grid[row][col]},{rel[row][col]}\n")
    _plot_grid(rel, out_dir / "cell_grid.png")
    click.echo(f"center bias: {bias:.4f}")


@metrics_group.command("size")
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@guarded
def cmd_metrics_size(records_path, out_dir):
    """Size-bias curve from size-factor-conditioned records."""
    records = read_eval_records(records_path)
    curve = size_bias_curve(records)
    counts: dict[str, int] = {}
    for r in records:
        key = f"f_size:{r.condition_value}"
        counts[key] = counts.get(key, 0) + 1
    report = BiasReport(size_curve=curve, sample_counts=counts)
    out_dir = Path(out_dir)
    _write_report(report, out_dir)
    with open(out_dir / "size_curve.csv", "w", encoding="utf-8") as fh:
        fh.write("size_factor,relative_accuracy\n")
        for f, acc in curve:
            fh.write(f"{f},{acc}\n")
    _plot_curve(curve, out_dir / "size_curve.png")
    click.echo("size curve: " + ", ".join(f"{f}:{a:.3f}" for f, a in curve))


def _plot_grid(rel, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(3.2, 3.2))
    im = ax.imshow(np.asarray(rel), vmin=0.0, vmax=1.0, cmap="viridis")
    for row in range(3):
        for col in range(3):
            ax.text(col, row, f"{rel[row][col]:.2f}", ha="center", va="center", color="white")
    fig.colorbar(im, ax=ax, fraction=0.046)
    ax.set_title("accuracy relative to center")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_curve(curve, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [f for f, _ in curve]
    ys = [a for _, a in curve]
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    ax.plot(xs, ys, marker="o")
    ax.set_xscale("log")
    ax.set_xlabel("size factor")
    ax.set_ylabel("relative accuracy")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


@cli.command("probe")
@click.argument("kind", type=click.Choice(["bg_swap", "grid", "size_sweep"]))
@click.argument("manifest_dir", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--factors", type=str, default="0.25,0.5,1.0,2.0,4.0", show_default=True)
@click.option("--render/--plans-only", "do_render", default=True)
@config_options
@guarded
def cmd_probe(kind, manifest_dir, out_dir, factors, do_render, **kwargs):
    """Emit deterministic evaluation probes (plans, and images by default)."""
    config = resolve_config(kwargs)
    out_dir = Path(out_dir)
    echo_config(config, out_dir)
    manifest = prune_backgrounds(load_manifest(manifest_dir), config.t_prune)
    factor_tuple = tuple(float(f) for f in factors.split(","))
    plans = probe_set(manifest, config, kind, factor_tuple)
    write_records(out_dir / "probes.jsonl", (plan_to_dict(p) for p in plans))
    if do_render:
        img_dir = out_dir / "images"
        img_dir.mkdir(parents=True, exist_ok=True)
        for plan in plans:
            img = render(plan, manifest, config, aug_pipeline=[])
            save_image(img_dir / f"{plan.index}_{plan.fg_id}.png", img)
    click.echo(f"wrote {len(plans)} probes ({kind}) to {out_dir}")


@cli.command("bench")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--size", type=int, default=224, show_default=True)
@click.option("--items", type=int, default=64, show_default=True)
@click.option("--workers-list", type=str, default="1,2,4,8", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@guarded
def cmd_bench(out_dir, size, items, workers_list, seed):
    """Render a fixed synthetic workload and report throughput per worker
    count; outputs must be byte-identical across counts."""
    rows, digest = run_bench(Path(out_dir), size, items, [int(w) for w in workers_list.split(",")], seed)
    click.echo("workers,images_per_sec")
    for workers, rate in rows:
        click.echo(f"{workers},{rate:.2f}")
    click.echo(f"output digest (identical across worker counts): {digest}")


def run_bench(out_dir: Path, size: int, items: int, workers_list: list[int], seed: int):
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = out_dir / "corpus"
    if not (corpus / "manifest").exists():
        generate_corpus(corpus, n_classes=2, n_per_class=8, seed=seed, size=size)
    config = RecombinationConfig(mix_schedule="none", seed=seed, total_epochs=max(1, items // 16))
    rows = []
    digests = []
    for workers in workers_list:
        run_dir = out_dir / f"w{workers}"
        started = time.perf_counter()
        epochs = range(0, (items + 15) // 16)
        n = run_generate(corpus / "manifest", config, run_dir, epochs, workers=workers)
        elapsed = time.perf_counter() - started
        rows.append((workers, n / elapsed))
        digests.append(_tree_digest(run_dir))
    if len(set(digests)) != 1:
        raise FgbgError(f"bench outputs differ across worker counts: {digests}")
    with open(out_dir / "bench.csv", "w", encoding="utf-8") as fh:
        fh.write("workers,images_per_sec\n")
        for workers, rate in rows:
            fh.write(f"{workers},{rate:.3f}\n")
    return rows, digests[0]


def _tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file() and path.suffix in (".png", ".jpeg", ".jpg"):
            h.update(path.relative_to(root).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


@cli.command("synth-corpus")
@click.argument("out_dir", type=click.Path())
@click.option("--classes", "n_classes", type=int, default=2, show_default=True)
@click.option("--per-class", "n_per_class", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size", type=int, default=224, show_default=True)
@click.option("--infill-max", type=float, default=0.6, show_default=True)
@guarded
def cmd_synth_corpus(out_dir, n_classes, n_per_class, seed, size, infill_max):
    """Generate the synthetic shapes corpus with exact ground truth."""
    manifest = generate_corpus(out_dir, n_classes, n_per_class, seed, size, infill_max)
    click.echo(
        f"wrote {len(manifest.foregrounds)} foregrounds and "
        f"{len(manifest.backgrounds)} backgrounds under {out_dir}"
    )


@cli.command("plot")
@click.option("--eta", "etas", type=str, default="-3,-2,1,2,3", show_default=True)
@click.option("--points", type=int, default=512, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@guarded
def cmd_plot(etas, points, out_dir):
    """Dump the placement density as CSV (and a figure) per eta."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    eta_list = [int(e) for e in etas.split(",")]
    xs = np.linspace(0.0, 1.0, points)
    table = {eta: [bates_pdf(BatesParam(eta), float(x)) for x in xs] for eta in eta_list}
    with open(out_dir / "pdf_table.csv", "w", encoding="utf-8") as fh:
        fh.write("x," + ",".join(f"eta={e}" for e in eta_list) + "\n")
        for i, x in enumerate(xs):
            fh.write(f"{x}," + ",".join(str(table[e][i]) for e in eta_list) + "\n")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.6, 3.2))
    for eta in eta_list:
        ax.plot(xs, table[eta], label=f"eta={eta}")
    ax.set_xlabel("position")
    ax.set_ylabel("density")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_dir / "pdf.png", dpi=120)
    plt.close(fig)
    click.echo(f"wrote density table for {eta_list} to {out_dir}")


def main():
    cli()


if __name__ == "__main__":
    main()
