"""Training loops: baseline CNN training and the two-stage procedure.

Stage 1 trains the base CNN with AdaDelta and cross-entropy. The
validation set is then classified once to build the misclassification
graph, which is normalized and frozen. Stage 2 adds the graph
convolution layer plus scoring head and continues training all
parameters (base weights included, unless frozen for ablation) on the
graph-path logits. The adjacency is never refreshed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import simgraph
from .config import TrainConfig
from .data import LabeledDataset, batches
from .errors import ConfigError
from .gcn import PkGcnModel, init_pkgcn
from .nn import Model, build_base_model
from .ops import softmax_cross_entropy
from .optim import AdaDelta


@dataclass
class RunMetrics:
    """Per-epoch history and final results of one run."""

    seed: int
    config: dict
    train_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    stage1_epochs: int = 0
    test_accuracy: float = float("nan")
    wall_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config,
            "train_loss": self.train_loss,
            "val_accuracy": self.val_accuracy,
            "stage1_epochs": self.stage1_epochs,
            "test_accuracy": self.test_accuracy,
            "wall_s": self.wall_s,
        }


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def evaluate(model, dataset: LabeledDataset, batch_size: int = 256) -> float:
    """Accuracy in percent over a dataset (model may be base or PK-GCN)."""
    correct = 0
    for start in range(0, len(dataset), batch_size):
        x = dataset.images[start : start + batch_size]
        y = dataset.labels[start : start + batch_size]
        correct += int((model.predict(x) == y).sum())
    return 100.0 * correct / len(dataset)


def _train_epochs(model, params, train_ds, val_ds, epochs, cfg, seed, metrics, epoch_offset=0):
    opt = AdaDelta(params, rho=cfg.rho, eps=cfg.eps)
    for epoch in range(epochs):
        losses = []
        for x, y in batches(train_ds, cfg.batch_size, _epoch_seed(seed, epoch_offset + epoch)):
            logits, cache = model.forward(x)
            loss, grad, _ = softmax_cross_entropy(logits, y)
            if cfg.freeze_base and isinstance(model, PkGcnModel):
                grads = model.backward(cache, grad, freeze_base=True)
            else:
                grads = model.backward(cache, grad)
            opt.step(params, grads)
            losses.append(loss * len(y))
        metrics.train_loss.append(float(np.sum(losses) / len(train_ds)))
        metrics.val_accuracy.append(evaluate(model, val_ds))


def train_baseline(
    cfg: TrainConfig,
    train_ds: LabeledDataset,
    val_ds: LabeledDataset,
    test_ds: LabeledDataset | None = None,
    seed: int = 0,
) -> tuple[Model, RunMetrics]:
    """Single-stage training of the base CNN for e1 + e2 epochs."""
    _check_splits(train_ds, val_ds)
    t0 = time.perf_counter()
    model = build_base_model(cfg.arch, seed=seed, in_shape=train_ds.images.shape[1:], dtype=cfg.dtype)
    metrics = RunMetrics(seed=seed, config=cfg.to_dict())
    _train_epochs(model, model.params(), train_ds, val_ds, cfg.total_epochs, cfg, seed, metrics)
    if test_ds is not None:
        metrics.test_accuracy = evaluate(model, test_ds)
    metrics.wall_s = time.perf_counter() - t0
    return model, metrics


def two_stage_train(
    cfg: TrainConfig,
    train_ds: LabeledDataset,
    val_ds: LabeledDataset,
    test_ds: LabeledDataset | None = None,
    seed: int = 0,
) -> tuple[PkGcnModel, RunMetrics]:
    """The full two-stage procedure; returns the PK-GCN model and metrics."""
    if cfg.variant not in ("v1", "v2"):
        raise ConfigError(f"two_stage_train needs variant v1 or v2, got {cfg.variant!r}")
    _check_splits(train_ds, val_ds)
    t0 = time.perf_counter()

    # Stage 1: plain base-model training.
    base = build_base_model(cfg.arch, seed=seed, in_shape=train_ds.images.shape[1:], dtype=cfg.dtype)
    metrics = RunMetrics(seed=seed, config=cfg.to_dict())
    _train_epochs(base, base.params(), train_ds, val_ds, cfg.e1, cfg, seed, metrics)
    metrics.stage1_epochs = cfg.e1

    # Misclassification graph from a single validation pass.
    preds = np.concatenate(
        [
            base.predict(val_ds.images[i : i + 256])
            for i in range(0, len(val_ds), 256)
        ]
    )
    counts = simgraph.record_confusion(val_ds.labels, preds, base.m)
    similarity = simgraph.build_similarity(counts, mode=cfg.similarity_mode)
    adjacency = simgraph.normalize(similarity)

    # Stage 2: graph layer added, fresh optimizer state, adjacency frozen.
    model = init_pkgcn(
        base,
        adjacency,
        head=cfg.variant,
        sigma=cfg.sigma,
        l=cfg.l,
        seed=seed,
        w_noise_scale=cfg.gcn_init_noise,
    )
    model.similarity = similarity
    _train_epochs(
        model, model.params(), train_ds, val_ds, cfg.e2, cfg, seed, metrics, epoch_offset=cfg.e1
    )
    if test_ds is not None:
        metrics.test_accuracy = evaluate(model, test_ds)
    metrics.wall_s = time.perf_counter() - t0
    return model, metrics


def _check_splits(train_ds, val_ds):
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ConfigError("train and validation splits must be non-empty")
    missing = set(range(val_ds.m)) - set(np.unique(val_ds.labels).tolist())
    if missing:
        raise ConfigError(f"classes absent from validation split: {sorted(missing)}")
