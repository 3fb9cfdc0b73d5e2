"""Demo: build and export a class-similarity graph from real mistakes.

Trains a small CNN briefly on the scikit-learn digits dataset, runs one
validation pass, and turns the confusion pattern into the directed
weighted graph that the graph convolution layer consumes. Exports the
graph as DOT (render with graphviz) and JSON.

Usage: python3 demos/02_misclassification_graph.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

from pkgcn import simgraph
from pkgcn.config import TrainConfig
from pkgcn.data import LabeledDataset, stratified_split
from pkgcn.nn import build_base_model
from pkgcn.train import _train_epochs, RunMetrics, evaluate


def digits_dataset() -> LabeledDataset:
    raw = load_digits()
    images = (raw.images / 16.0)[:, None, :, :]  # (N, 1, 8, 8) in [0, 1]
    return LabeledDataset(images, raw.target.astype(np.int64), m=10)


def main():
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_out")
    out_dir.mkdir(parents=True, exist_ok=True)

    pool = digits_dataset()
    train_ds, val_ds = stratified_split(pool, 500, 500, seed=0)
    cfg = TrainConfig(train_size=500, val_size=500, e1=6, e2=0, precision="double").validate()

    print("Training a small CNN on 500 digits for 6 epochs...")
    model = build_base_model("cnn1", seed=0, in_shape=(1, 8, 8))
    metrics = RunMetrics(seed=0, config=cfg.to_dict())
    _train_epochs(model, model.params(), train_ds, val_ds, cfg.e1, cfg, 0, metrics)
    print(f"  validation accuracy after stage 1: {metrics.val_accuracy[-1]:.1f}%")

    print("\nClassifying the validation set once to collect confusions...")
    preds = model.predict(val_ds.images)
    counts = simgraph.record_confusion(val_ds.labels, preds, m=10)
    similarity = simgraph.build_similarity(counts, mode="ratio")
    adjacency = simgraph.normalize(similarity)

    print("Strongest confusion edges (true -> predicted, rate):")
    flat = [(similarity[i, j], i, j) for i in range(10) for j in range(10) if i != j]
    for rate, i, j in sorted(flat, reverse=True)[:8]:
        if rate > 0:
            print(f"  {i} -> {j}   {rate:.3f}")

    simgraph.export_dot(similarity, out_dir / "digits_graph.dot", threshold=0.01)
    simgraph.export_json(similarity, adjacency, out_dir / "digits_graph.json")
    print(f"\nWrote {out_dir}/digits_graph.dot and .json")
    print("Render the DOT file with:  dot -Tpng digits_graph.dot -o graph.png")

    # the degree-normalized matrix keeps self-loops dominant in each row
    print("\nNormalized adjacency diagonal (self-loop weights):")
    print("  " + " ".join(f"{adjacency[i, i]:.2f}" for i in range(10)))
    print(f"final evaluation on the full pool: {evaluate(model, pool):.1f}%")


if __name__ == "__main__":
    main()
