"""pkgcn: class-similarity knowledge injection for CNN classifiers.

Two-stage training: a base CNN is trained first, its validation-set
misclassifications define a directed weighted class-similarity graph,
and a graph convolution layer over per-class node features (data
embedding concatenated with class embedding) is then added and the
whole model retrained.
"""

from . import checkpoint, config, data, gcn, nn, ops, optim, simgraph, train, verify
from .errors import (
    ConfigError,
    FormatError,
    InputError,
    NumericError,
    PkGcnError,
    ShapeError,
    StateError,
    UsageError,
)

__all__ = [
    "checkpoint",
    "config",
    "verify",
    "data",
    "gcn",
    "nn",
    "ops",
    "optim",
    "simgraph",
    "train",
    "PkGcnError",
    "ShapeError",
    "InputError",
    "ConfigError",
    "FormatError",
    "NumericError",
    "StateError",
    "UsageError",
]

__version__ = "0.1.0"
