"""AdaDelta optimizer (Zeiler's recurrence), one instance per training run."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, NumericError, ShapeError


class AdaDelta:
    """Per-parameter running averages of squared gradients and updates.

    Update rule, elementwise:
        E[g^2]  <- rho E[g^2] + (1 - rho) g^2
        dx      = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
        E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
        x       <- x + dx
    """

    def __init__(self, params: dict[str, np.ndarray], rho: float = 0.95, eps: float = 1e-6):
        if not 0.0 < rho < 1.0:
            raise ConfigError(f"rho must be in (0, 1), got {rho}")
        if eps <= 0.0:
            raise ConfigError(f"epsilon must be positive, got {eps}")
        self.rho = rho
        self.eps = eps
        self.eg2 = {k: np.zeros_like(p) for k, p in params.items()}
        self.edx2 = {k: np.zeros_like(p) for k, p in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update ``params`` in place from ``grads`` (matching keys/shapes)."""
        for key, p in params.items():
            g = grads[key]
            if g.shape != p.shape:
                raise ShapeError(f"grad shape {g.shape} != param shape {p.shape} for {key}")
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {key}")
            eg2 = self.eg2[key]
            edx2 = self.edx2[key]
            eg2 *= self.rho
            eg2 += (1.0 - self.rho) * g * g
            dx = -np.sqrt(edx2 + self.eps) / np.sqrt(eg2 + self.eps) * g
            edx2 *= self.rho
            edx2 += (1.0 - self.rho) * dx * dx
            p += dx
