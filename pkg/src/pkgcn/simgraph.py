"""Class-similarity graph built from validation-set misclassifications.

Pipeline: raw confusion counts -> directed similarity matrix (rates or
counts) -> degree-normalized adjacency with self-loops, the matrix the
graph convolution layer consumes. The graph is directed: class i being
confused with class j says nothing about the reverse direction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError


@dataclass
class ConfusionCounts:
    """counts[i, j] = validation examples of true class i predicted as j."""

    counts: np.ndarray  # (m, m) int64

    @property
    def m(self) -> int:
        return self.counts.shape[0]

    def per_class_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def merge(self, other: "ConfusionCounts") -> "ConfusionCounts":
        if other.counts.shape != self.counts.shape:
            raise InputError("cannot merge confusion counts of different sizes")
        return ConfusionCounts(self.counts + other.counts)


def record_confusion(true_labels, predicted_labels, m: int) -> ConfusionCounts:
    true_labels = np.asarray(true_labels)
    predicted_labels = np.asarray(predicted_labels)
    if true_labels.shape != predicted_labels.shape:
        raise InputError("label arrays must have equal length")
    for name, arr in [("true", true_labels), ("predicted", predicted_labels)]:
        if arr.size and (arr.min() < 0 or arr.max() >= m):
            raise InputError(f"{name} labels out of range [0, {m})")
    counts = np.zeros((m, m), dtype=np.int64)
    np.add.at(counts, (true_labels, predicted_labels), 1)
    return ConfusionCounts(counts)


def build_similarity(counts: ConfusionCounts, mode: str = "ratio") -> np.ndarray:
    """Directed similarity matrix A with zero diagonal.

    ``ratio`` (default) weights edge i->j by the misclassification rate
    count[i,j] / total_i, making A invariant to validation-set size;
    ``count`` keeps raw counts for comparison.
    """
    if mode not in ("ratio", "count"):
        raise ConfigError(f"unknown similarity mode {mode!r}")
    totals = counts.per_class_totals()
    if np.any(totals == 0):
        missing = np.flatnonzero(totals == 0).tolist()
        raise ConfigError(f"classes with no validation examples: {missing}")
    a = counts.counts.astype(np.float64)
    if mode == "ratio":
        a = a / totals[:, None]
    np.fill_diagonal(a, 0.0)
    return a


def normalize(similarity: np.ndarray) -> np.ndarray:
    """Degree-normalized adjacency with self-loops.

    A_hat = D^{-1/2} (A + I) D^{-1/2} with D the diagonal of row sums
    of A + I. Self-loops guarantee strictly positive degrees. The
    normalization is applied verbatim to the directed (possibly
    asymmetric) matrix.
    """
    a = np.asarray(similarity, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"similarity must be square, got {a.shape}")
    a_tilde = a + np.eye(a.shape[0])
    d = a_tilde.sum(axis=1)
    d_inv_sqrt = 1.0 / np.sqrt(d)
    return d_inv_sqrt[:, None] * a_tilde * d_inv_sqrt[None, :]


# ---------------------------------------------------------------------------
# export


def export_dot(matrix: np.ndarray, path, labels=None, threshold: float = 0.01) -> None:
    """Write a DOT digraph; edge penwidth scales with weight.

    Edges below ``threshold`` are omitted (display only; computation
    never uses the threshold).
    """
    m = matrix.shape[0]
    labels = labels or [str(i) for i in range(m)]
    lines = ["digraph class_similarity {"]
    for i in range(m):
        lines.append(f'    "{labels[i]}";')
    for i in range(m):
        for j in range(m):
            if i != j and matrix[i, j] >= threshold:
                pw = 1.0 + 9.0 * float(matrix[i, j])
                lines.append(
                    f'    "{labels[i]}" -> "{labels[j]}" '
                    f'[penwidth={pw:.3f}, label="{matrix[i, j]:.3f}"];'
                )
    lines.append("}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def export_json(similarity: np.ndarray, normalized: np.ndarray, path, labels=None) -> None:
    m = similarity.shape[0]
    payload = {
        "m": m,
        "labels": labels or [str(i) for i in range(m)],
        "A": similarity.tolist(),
        "normalized": normalized.tolist(),
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=1)


def load_json(path):
    with open(path) as f:
        payload = json.load(f)
    return (
        np.array(payload["A"], dtype=np.float64),
        np.array(payload["normalized"], dtype=np.float64),
        payload["labels"],
    )
