"""Demo: baseline CNN vs the two graph-augmented variants.

Runs the full two-stage procedure on the scikit-learn digits dataset
and compares test accuracy against a baseline trained for the same
total number of epochs. Small data on purpose: the graph layer is
designed to help most when training data is scarce.

Usage: python3 demos/03_two_stage_comparison.py [seed]
"""

import sys

import numpy as np

from pkgcn.config import TrainConfig
from pkgcn.data import stratified_split
from pkgcn.train import train_baseline, two_stage_train

from importlib import import_module

digits_dataset = import_module("02_misclassification_graph").digits_dataset


def main():
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    pool = digits_dataset()
    # hold out a fixed test set, split the rest into train|validation
    rng = np.random.default_rng(99)
    order = rng.permutation(len(pool))
    test_ds = pool.subset(order[:500])
    rest = pool.subset(order[500:])
    train_ds, val_ds = stratified_split(rest, 300, 300, seed=seed)

    cfg = TrainConfig(
        train_size=300, val_size=300, e1=10, e2=30, precision="double"
    ).validate()
    print(f"digits 300|300, seed {seed}: baseline trains {cfg.total_epochs} epochs, "
          f"variants train {cfg.e1}+{cfg.e2}\n")

    results = {}
    _, metrics = train_baseline(cfg, train_ds, val_ds, test_ds, seed=seed)
    results["baseline"] = metrics.test_accuracy
    print(f"  baseline  test accuracy {metrics.test_accuracy:.2f}%  ({metrics.wall_s:.0f}s)")

    for variant in ("v1", "v2"):
        model, metrics = two_stage_train(cfg.replace(variant=variant),
                                         train_ds, val_ds, test_ds, seed=seed)
        results[variant] = metrics.test_accuracy
        edges = int((model.similarity >= 0.02).sum())
        print(f"  {variant:8s}  test accuracy {metrics.test_accuracy:.2f}%  "
              f"(graph has {edges} edges >= 0.02, {metrics.wall_s:.0f}s)")

    print("\nDelta vs baseline:")
    for variant in ("v1", "v2"):
        print(f"  {variant}: {results[variant] - results['baseline']:+.2f} points")
    print("\nSingle-seed deltas are noisy; average several seeds (or use the")
    print("`pkgcn reproduce-table` command on MNIST) before drawing conclusions.")


if __name__ == "__main__":
    main()
