"""Command-line experiment harness.

Subcommands:
    train            run baseline or two-stage training for each seed
    reproduce-table  run the full {size} x {variant} x {seed} grid
    export-graph     re-emit DOT/JSON from a stored model checkpoint
    verify           run the numeric self-check suites

Results land in the configured output directory as metrics JSON,
checkpoints, graph exports and a CSV with one row per run.
"""

from __future__ import annotations

import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import simgraph, train, verify
from .checkpoint import load_checkpoint, load_model, save_checkpoint
from .config import TrainConfig
from .data import LabeledDataset, load_cifar10, load_mnist, stratified_split
from .errors import PkGcnError, UsageError

CSV_COLUMNS = [
    "dataset", "arch", "variant", "T", "V", "e1", "e2",
    "seed", "test_acc", "delta_vs_baseline", "wall_s",
]

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def _find(data_dir: Path, name: str) -> Path:
    for candidate in (data_dir / name, data_dir / (name + ".gz")):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{data_dir / name}[.gz] not found")


def load_datasets(cfg: TrainConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """Full official train pool and test set for the configured dataset."""
    data_dir = Path(cfg.data_dir)
    if cfg.dataset == "mnist":
        pool = load_mnist(
            _find(data_dir, MNIST_FILES["train_images"]),
            _find(data_dir, MNIST_FILES["train_labels"]),
            dtype=cfg.dtype,
        )
        test = load_mnist(
            _find(data_dir, MNIST_FILES["test_images"]),
            _find(data_dir, MNIST_FILES["test_labels"]),
            dtype=cfg.dtype,
        )
        return pool, test
    batch_dir = data_dir / "cifar-10-batches-bin"
    if not batch_dir.is_dir():
        batch_dir = data_dir
    pool = load_cifar10(
        [_find(batch_dir, f"data_batch_{i}.bin") for i in range(1, 6)], dtype=cfg.dtype
    )
    test = load_cifar10([_find(batch_dir, "test_batch.bin")], dtype=cfg.dtype)
    return pool, test


def run_cell(cfg: TrainConfig, seed: int, out_dir: Path, pool=None, test=None):
    """Train one (config, seed) cell and write all of its artifacts.

    Returns the results-CSV row as a dict (delta column left blank;
    deltas need the paired baseline and are filled in by the caller).
    """
    if pool is None:
        pool, test = load_datasets(cfg)
    train_ds, val_ds = stratified_split(pool, cfg.train_size, cfg.val_size, seed)
    if cfg.variant == "baseline":
        model, metrics = train.train_baseline(cfg, train_ds, val_ds, test, seed=seed)
    else:
        model, metrics = train.two_stage_train(cfg, train_ds, val_ds, test, seed=seed)

    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg.variant}_seed{seed}"
    with open(out_dir / f"metrics_{stem}.json", "w") as f:
        json.dump(metrics.to_dict(), f, indent=1)
    save_checkpoint(model, out_dir / f"model_{stem}.ckpt")
    if cfg.variant != "baseline":
        simgraph.export_dot(
            model.similarity, out_dir / f"graph_{stem}.dot", threshold=cfg.graph_threshold
        )
        simgraph.export_json(
            model.similarity, np.asarray(model.adjacency), out_dir / f"graph_{stem}.json"
        )
    return {
        "dataset": cfg.dataset,
        "arch": cfg.arch,
        "variant": cfg.variant,
        "T": cfg.train_size,
        "V": cfg.val_size,
        "e1": cfg.e1 if cfg.variant != "baseline" else cfg.total_epochs,
        "e2": cfg.e2 if cfg.variant != "baseline" else 0,
        "seed": seed,
        "test_acc": f"{metrics.test_accuracy:.2f}",
        "delta_vs_baseline": "",
        "wall_s": f"{metrics.wall_s:.1f}",
    }


def _write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def _cell_worker(args):
    cfg_dict, seed, out_dir = args
    cfg = TrainConfig.from_dict(cfg_dict)
    return run_cell(cfg, seed, Path(out_dir))


def _run_cells(cells, threads: int) -> list:
    """Run (cfg, seed, out_dir) cells, optionally across processes.

    Returns one result per cell in order; a failed cell yields the
    exception object instead of a row so the grid can keep going.
    """
    jobs = [(cfg.to_dict(), seed, str(out_dir)) for cfg, seed, out_dir in cells]
    results = []
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_cell_worker, job) for job in jobs]
            for fut in futures:
                try:
                    results.append(fut.result())
                except Exception as e:  # noqa: BLE001 - recorded per cell
                    results.append(e)
    else:
        for job in jobs:
            try:
                results.append(_cell_worker(job))
            except Exception as e:  # noqa: BLE001
                results.append(e)
    return results


def _apply_overrides(cfg: TrainConfig, out, seeds, precision) -> TrainConfig:
    kw = {}
    if out is not None:
        kw["out_dir"] = out
    if seeds is not None:
        kw["seeds"] = [int(s) for s in seeds.split(",") if s.strip()]
    if precision is not None:
        kw["precision"] = precision
    return cfg.replace(**kw) if kw else cfg


def _set_threads_env(threads: int) -> None:
    # cap BLAS threads so --threads controls total parallelism
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1" if threads > 1 else str(os.cpu_count() or 1))


common_options = [
    click.option("--config", "config_path", required=True, type=click.Path(),
                 help="JSON config file."),
    click.option("--out", default=None, help="Output directory (overrides config)."),
    click.option("--seeds", default=None, help="Comma-separated seed list (overrides config)."),
    click.option("--threads", default=1, show_default=True, help="Parallel grid cells."),
    click.option("--precision", default=None, type=click.Choice(["single", "double"]),
                 help="Float precision (overrides config)."),
]


def _with_common(fn):
    for opt in reversed(common_options):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(package_name="pkgcn")
def main():
    """Two-stage CNN + class-similarity-graph training harness."""


@main.command("train")
@_with_common
def cmd_train(config_path, out, seeds, threads, precision):
    """Train the configured variant once per seed."""
    try:
        cfg = _apply_overrides(TrainConfig.from_file(config_path), out, seeds, precision)
    except PkGcnError as e:
        raise click.ClickException(str(e))
    _set_threads_env(threads)
    out_dir = Path(cfg.out_dir) / f"{cfg.dataset}_{cfg.arch}_T{cfg.train_size}_V{cfg.val_size}"
    try:
        load_datasets(cfg)  # fail fast, before any training
    except FileNotFoundError as e:
        click.echo(f"dataset files missing: {e}", err=True)
        sys.exit(2)

    cells = [(cfg, seed, out_dir) for seed in cfg.seeds]
    rows, failed = [], []
    for (_, seed, _), result in zip(cells, _run_cells(cells, threads)):
        if isinstance(result, Exception):
            failed.append((seed, result))
            click.echo(f"seed {seed} failed: {result}", err=True)
        else:
            rows.append(result)
            click.echo(
                f"{cfg.variant} seed {result['seed']}: "
                f"test accuracy {result['test_acc']}% ({result['wall_s']}s)"
            )
    _write_csv(out_dir / "results.csv", rows)
    click.echo(f"wrote {out_dir / 'results.csv'}")
    if failed:
        sys.exit(1)


@main.command("reproduce-table")
@_with_common
@click.option("--sizes", default="300,500,1000,1500,2000,2500,3000", show_default=True,
              help="Comma-separated train=validation sizes for the grid.")
def cmd_reproduce_table(config_path, out, seeds, threads, precision, sizes):
    """Run the {size} x {baseline,v1,v2} x {seed} grid and tabulate."""
    try:
        with open(config_path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise click.ClickException(f"cannot read config {config_path}: {e}")
    size_list = raw.pop("sizes", None)
    try:
        cfg = _apply_overrides(TrainConfig.from_dict(raw), out, seeds, precision)
    except PkGcnError as e:
        raise click.ClickException(str(e))
    if sizes:
        size_list = [int(s) for s in sizes.split(",") if s.strip()]
    if not size_list:
        raise click.ClickException("no grid sizes given (config 'sizes' key or --sizes)")
    _set_threads_env(threads)
    try:
        load_datasets(cfg)
    except FileNotFoundError as e:
        click.echo(f"dataset files missing: {e}", err=True)
        sys.exit(2)

    out_root = Path(cfg.out_dir)
    cells = []
    for size in size_list:
        for variant in ("baseline", "v1", "v2"):
            cell_cfg = cfg.replace(train_size=size, val_size=size, variant=variant)
            cell_dir = out_root / f"{cfg.dataset}_{cfg.arch}_T{size}_V{size}"
            cells.extend((cell_cfg, seed, cell_dir) for seed in cfg.seeds)

    rows, failures = [], 0
    results = _run_cells(cells, threads)
    for (cell_cfg, seed, _), result in zip(cells, results):
        if isinstance(result, Exception):
            failures += 1
            click.echo(
                f"cell T={cell_cfg.train_size} {cell_cfg.variant} seed={seed} "
                f"failed: {result}", err=True,
            )
            continue
        rows.append(result)

    # per-seed delta against the paired baseline run
    baseline_acc = {
        (r["T"], r["seed"]): float(r["test_acc"])
        for r in rows if r["variant"] == "baseline"
    }
    for r in rows:
        ref = baseline_acc.get((r["T"], r["seed"]))
        if r["variant"] != "baseline" and ref is not None:
            r["delta_vs_baseline"] = f"{float(r['test_acc']) - ref:+.2f}"

    out_root.mkdir(parents=True, exist_ok=True)
    _write_csv(out_root / "results.csv", rows)
    _write_summary(out_root / "summary.csv", rows)
    click.echo(f"wrote {out_root / 'results.csv'} and {out_root / 'summary.csv'}")
    if failures:
        click.echo(f"{failures} grid cell(s) failed", err=True)
        sys.exit(1)


def _write_summary(path: Path, rows: list[dict]) -> None:
    """Mean/std per (size, variant) cell plus delta of means vs baseline."""
    cells: dict[tuple, list[float]] = {}
    for r in rows:
        cells.setdefault((r["T"], r["variant"]), []).append(float(r["test_acc"]))
    means = {k: float(np.mean(v)) for k, v in cells.items()}
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["T", "V", "variant", "n_seeds", "mean_test_acc",
                         "std_test_acc", "delta_vs_baseline"])
        for (size, variant), accs in sorted(cells.items()):
            base_mean = means.get((size, "baseline"))
            delta = ""
            if variant != "baseline" and base_mean is not None:
                delta = f"{means[(size, variant)] - base_mean:+.2f}"
            writer.writerow([
                size, size, variant, len(accs),
                f"{np.mean(accs):.2f}", f"{np.std(accs):.2f}", delta,
            ])


@main.command("export-graph")
@click.argument("checkpoint", type=click.Path(exists=True))
@click.option("--out", default=".", show_default=True, help="Output directory.")
@click.option("--threshold", default=0.01, show_default=True,
              help="Minimum edge weight drawn in the DOT file.")
def cmd_export_graph(checkpoint, out, threshold):
    """Re-emit the misclassification graph stored in a checkpoint."""
    try:
        ckpt = load_checkpoint(checkpoint)
        if ckpt.tag == "base":
            raise UsageError(
                f"{checkpoint} holds a base model only; graphs exist in pkgcn checkpoints"
            )
        model = load_model(checkpoint)
    except PkGcnError as e:
        raise click.ClickException(str(e))
    adjacency = np.asarray(model.adjacency)
    # older checkpoints may lack the raw matrix; fall back to the stored
    # normalized adjacency for both exports
    similarity = adjacency if model.similarity is None else model.similarity
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(checkpoint).stem
    simgraph.export_dot(similarity, out_dir / f"{stem}.dot", threshold=threshold)
    simgraph.export_json(similarity, adjacency, out_dir / f"{stem}.json")
    click.echo(f"wrote {out_dir / (stem + '.dot')} and {out_dir / (stem + '.json')}")


@main.command("verify")
def cmd_verify():
    """Run gradient checks and oracle equivalences; nonzero exit on failure."""
    t0 = time.perf_counter()
    ok = True
    for result in verify.run_all():
        status = "ok  " if result.passed else "FAIL"
        ok = ok and result.passed
        click.echo(
            f"[{status}] {result.name:45s} max error {result.max_error:.3e}"
            f" (tolerance {result.threshold:.0e})"
        )
    click.echo(f"{'all suites passed' if ok else 'FAILURES detected'}"
               f" in {time.perf_counter() - t0:.1f}s")
    if not ok:
        sys.exit(1)


if __name__ == "__main__":
    main()
