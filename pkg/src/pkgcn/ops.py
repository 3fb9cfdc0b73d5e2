"""Differentiable array primitives with hand-written backward passes.

Every forward operation here has a matching ``*_backward`` function that
maps the upstream gradient to gradients for each input. A central
finite-difference checker is provided to verify the pairs.

All functions are pure: they never mutate their inputs and identical
inputs produce bitwise-identical outputs.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InputError, NumericError, ShapeError


def assert_finite(x: np.ndarray, what: str = "array") -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")


# ---------------------------------------------------------------------------
# matmul


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return a @ b


def matmul_backward(g: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Gradients of sum(G * (A@B)): grad_a = G B^T, grad_b = A^T G."""
    return g @ b.T, a.T @ g


# ---------------------------------------------------------------------------
# conv2d (cross-correlation, stride 1)


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, padding: int = 0) -> np.ndarray:
    """Valid cross-correlation of a BxCxHxW batch with FxCxkhxkw kernels.

    ``padding`` adds symmetric zero padding; the default 0 is the plain
    valid convolution used by the small presets.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-d input/kernels, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: channel mismatch {x.shape} vs {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d: bias shape {b.shape} does not match {w.shape[0]} filters")
    kh, kw = w.shape[2], w.shape[3]
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    if kh > x.shape[2] or kw > x.shape[3]:
        raise ShapeError(f"conv2d: kernel {w.shape} larger than input {x.shape}")
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # B,C,H',W',kh,kw
    out = np.einsum("bchwij,fcij->bfhw", win, w, optimize=True)
    return out + b[None, :, None, None]


def conv2d_backward(g: np.ndarray, x: np.ndarray, w: np.ndarray, padding: int = 0):
    """Gradients for input, kernels and bias of conv2d."""
    kh, kw = w.shape[2], w.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    gb = g.sum(axis=(0, 2, 3))
    gw = np.einsum("bchwij,bfhw->fcij", win, g, optimize=True)
    # full correlation of the upstream gradient with flipped kernels
    gp = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    gwin = sliding_window_view(gp, (kh, kw), axis=(2, 3))
    gxp = np.einsum("bfhwij,fcij->bchw", gwin, w[:, :, ::-1, ::-1], optimize=True)
    if padding:
        gx = gxp[:, :, padding:padding + x.shape[2], padding:padding + x.shape[3]]
    else:
        gx = gxp
    return gx, gw, gb


# ---------------------------------------------------------------------------
# 2x2 max pooling


def _pool_windows(x: np.ndarray) -> np.ndarray:
    B, C, H, W = x.shape
    r = x.reshape(B, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return r.reshape(B, C, H // 2, W // 2, 4)


def maxpool2(x: np.ndarray):
    """Non-overlapping 2x2 max pool. Returns (output, argmax cache).

    Ties break to the first maximal element in row-major window order.
    """
    if x.ndim != 4:
        raise ShapeError(f"maxpool2: expected 4-d input, got {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"maxpool2: spatial dims must be even, got {x.shape}")
    win = _pool_windows(x)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2_backward(g: np.ndarray, idx: np.ndarray, in_shape) -> np.ndarray:
    B, C, H, W = in_shape
    buf = np.zeros((B, C, H // 2, W // 2, 4), dtype=g.dtype)
    np.put_along_axis(buf, idx[..., None], g[..., None], axis=-1)
    return buf.reshape(B, C, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H, W)


# ---------------------------------------------------------------------------
# relu


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    return g * (x > 0)


# ---------------------------------------------------------------------------
# softmax cross-entropy


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over a batch of logits.

    Returns (loss, grad_logits, probs) with grad_logits = (probs - onehot)/B.
    """
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: expected BxM logits, got {logits.shape}")
    labels = np.asarray(labels)
    B, m = logits.shape
    if labels.shape != (B,):
        raise ShapeError(f"softmax_cross_entropy: labels shape {labels.shape} != ({B},)")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= m:
        raise InputError(f"labels out of range [0, {m})")
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    logp = z - np.log(ez.sum(axis=1, keepdims=True))
    loss = -logp[np.arange(B), labels].mean()
    grad = probs.copy()
    grad[np.arange(B), labels] -= 1.0
    grad /= B
    return loss, grad, probs


# ---------------------------------------------------------------------------
# finite-difference gradient checker


def finite_difference_check(
    fn: Callable[[Sequence[np.ndarray]], tuple],
    params: Sequence[np.ndarray],
    epsilon: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic gradients against central finite differences.

    ``fn(params)`` must return ``(loss, grads)`` where ``grads`` matches
    ``params`` in shapes. Returns the maximum relative error over all
    probed coordinates, with denominator max(1, |analytic|). With
    ``max_coords`` set, a seeded random subset of coordinates per
    parameter is probed instead of all of them.
    """
    params = [np.asarray(p, dtype=np.float64) for p in params]
    loss0, grads = fn(params)
    if not np.isfinite(loss0):
        raise NumericError("non-finite loss at probe point")
    worst = 0.0
    for pi, p in enumerate(params):
        flat = p.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(flat.size, size=max_coords, replace=False)
        analytic = np.asarray(grads[pi]).reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + epsilon
            lp = fn(params)[0]
            flat[c] = orig - epsilon
            lm = fn(params)[0]
            flat[c] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericError("non-finite loss while probing")
            numeric = (lp - lm) / (2 * epsilon)
            err = abs(numeric - analytic[c]) / max(1.0, abs(analytic[c]))
            worst = max(worst, err)
    return worst
