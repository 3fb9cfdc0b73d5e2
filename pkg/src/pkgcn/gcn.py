"""Graph-convolution scoring path added to a trained base classifier.

For each input image, one graph node per class carries the feature
x_i = (data embedding d) concatenated with (class embedding c_i). The
nodes are convolved over the frozen misclassification adjacency and
the convolved representations are turned into class scores by one of
two heads:

  variant 1: s_i = dot(d, second half of h_i) + dot(c_i, first half of h_i)
  variant 2: a shared affine layer maps (x_i ++ h_i) to a 2l vector q
             and s_i = dot(first half of q, second half of q)

All functions are batched over B examples sharing the same adjacency.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import Model, he_uniform


ACTIVATIONS = ("relu", "identity", "tanh")


def _act(z: np.ndarray, sigma: str) -> np.ndarray:
    if sigma == "relu":
        return np.maximum(z, 0)
    if sigma == "tanh":
        return np.tanh(z)
    if sigma == "identity":
        return z
    raise ConfigError(f"unknown activation {sigma!r}")


def _act_grad(g: np.ndarray, z: np.ndarray, sigma: str) -> np.ndarray:
    if sigma == "relu":
        return g * (z > 0)
    if sigma == "tanh":
        return g * (1.0 - np.tanh(z) ** 2)
    return g


# ---------------------------------------------------------------------------
# node features


def assemble_node_features(d: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Per-class node features X[b, i] = (d[b] ++ c[i]).

    ``d`` is (B, n) or (n,), ``c`` is (m, n); returns (B, m, 2n) or (m, 2n).
    """
    single = d.ndim == 1
    db = d[None, :] if single else d
    if db.ndim != 2 or c.ndim != 2 or db.shape[1] != c.shape[1]:
        raise ShapeError(f"embedding widths disagree: d {d.shape}, C {c.shape}")
    B, n = db.shape
    m = c.shape[0]
    x = np.empty((B, m, 2 * n), dtype=np.result_type(db, c))
    x[:, :, :n] = db[:, None, :]
    x[:, :, n:] = c[None, :, :]
    return x[0] if single else x


def assemble_backward(gx: np.ndarray):
    """Split an upstream (B, m, 2n) gradient into (grad_d, grad_C).

    grad_d sums over the m rows (the data embedding is shared across
    nodes); grad_C sums over the batch.
    """
    n = gx.shape[-1] // 2
    if gx.ndim == 2:
        return gx[:, :n].sum(axis=0), gx[:, n:]
    return gx[:, :, :n].sum(axis=1), gx[:, :, n:].sum(axis=0)


# ---------------------------------------------------------------------------
# graph convolution


def gcn_forward(a_hat: np.ndarray, x: np.ndarray, w: np.ndarray, sigma: str = "relu"):
    """H = sigma(A_hat X W) for one example (m, 2n) or a batch (B, m, 2n).

    Returns (H, cache) where the cache holds what the backward needs.
    """
    m = a_hat.shape[0]
    if a_hat.shape != (m, m) or x.shape[-2] != m or x.shape[-1] != w.shape[0]:
        raise ShapeError(
            f"gcn shapes disagree: A {a_hat.shape}, X {x.shape}, W {w.shape}"
        )
    if w.shape[0] != w.shape[1]:
        raise ShapeError(f"gcn weight must be square, got {w.shape}")
    ax = a_hat @ x if x.ndim == 2 else np.einsum("ij,bjk->bik", a_hat, x)
    z = ax @ w
    return _act(z, sigma), (ax, z)


def gcn_backward(g: np.ndarray, cache, a_hat: np.ndarray, w: np.ndarray, sigma: str = "relu"):
    """Gradients (grad_X, grad_W); the adjacency never receives gradient."""
    ax, z = cache
    gz = _act_grad(g, z, sigma)
    if gz.ndim == 2:
        gw = ax.T @ gz
        gx = a_hat.T @ (gz @ w.T)
    else:
        gw = np.einsum("bik,bil->kl", ax, gz)
        gx = np.einsum("ij,bjk->bik", a_hat.T, gz @ w.T)
    return gx, gw


# ---------------------------------------------------------------------------
# scoring heads


def score_v1(d: np.ndarray, c: np.ndarray, h: np.ndarray) -> np.ndarray:
    """s_i = dot(d, h_i[n:]) + dot(c_i, h_i[:n]); batched over B."""
    single = d.ndim == 1
    db = d[None, :] if single else d
    hb = h[None] if h.ndim == 2 else h
    n = db.shape[1]
    if hb.shape[-1] != 2 * n or c.shape[1] != n:
        raise ShapeError(f"score_v1 shapes disagree: d {d.shape}, C {c.shape}, H {h.shape}")
    s = np.einsum("bk,bik->bi", db, hb[:, :, n:]) + np.einsum("ik,bik->bi", c, hb[:, :, :n])
    return s[0] if single else s


def score_v1_backward(gs: np.ndarray, d: np.ndarray, c: np.ndarray, h: np.ndarray):
    """Gradients (grad_d, grad_C, grad_H) of the variant-1 scores."""
    single = d.ndim == 1
    db = d[None, :] if single else d
    hb = h[None] if h.ndim == 2 else h
    gsb = gs[None] if single else gs
    n = db.shape[1]
    gd = np.einsum("bi,bik->bk", gsb, hb[:, :, n:])
    gc = np.einsum("bi,bik->ik", gsb, hb[:, :, :n])
    gh = np.empty_like(hb)
    gh[:, :, n:] = gsb[:, :, None] * db[:, None, :]
    gh[:, :, :n] = gsb[:, :, None] * c[None, :, :]
    if single:
        return gd[0], gc, gh[0]
    return gd, gc, gh


def score_v2(x: np.ndarray, h: np.ndarray, w_fc: np.ndarray, b_fc: np.ndarray):
    """Shared affine head: q_i = (x_i ++ h_i) W_fc + b_fc, s_i = q[:l] . q[l:].

    Returns (s, cache).
    """
    if x.shape != h.shape:
        raise ShapeError(f"score_v2: X {x.shape} and H {h.shape} must match")
    if w_fc.shape[0] != 2 * x.shape[-1] or w_fc.shape[1] % 2 or b_fc.shape != (w_fc.shape[1],):
        raise ShapeError(f"score_v2 head shapes disagree: W_fc {w_fc.shape}, b_fc {b_fc.shape}")
    u = np.concatenate([x, h], axis=-1)
    q = u @ w_fc + b_fc
    l = q.shape[-1] // 2
    s = (q[..., :l] * q[..., l:]).sum(axis=-1)
    return s, (u, q)


def score_v2_backward(gs: np.ndarray, cache, w_fc: np.ndarray):
    """Gradients (grad_X, grad_H, grad_Wfc, grad_bfc) of the variant-2 scores."""
    u, q = cache
    l = q.shape[-1] // 2
    gq = np.empty_like(q)
    gq[..., :l] = gs[..., None] * q[..., l:]
    gq[..., l:] = gs[..., None] * q[..., :l]
    if u.ndim == 2:
        gw = u.T @ gq
        gb = gq.sum(axis=0)
    else:
        gw = np.einsum("bik,bil->kl", u, gq)
        gb = gq.sum(axis=(0, 1))
    gu = gq @ w_fc.T
    half = u.shape[-1] // 2
    return gu[..., :half], gu[..., half:], gw, gb


# ---------------------------------------------------------------------------
# assembled model


@dataclass
class PkGcnModel:
    """Base model plus frozen adjacency, GCN weight and scoring head."""

    base: Model
    adjacency: np.ndarray
    gcn_w: np.ndarray
    sigma: str = "relu"
    head: str = "v1"
    fc_w: Optional[np.ndarray] = None
    fc_b: Optional[np.ndarray] = None
    # un-normalized misclassification matrix, kept for export only
    similarity: Optional[np.ndarray] = None

    def __post_init__(self):
        m = self.base.m
        if self.adjacency.shape != (m, m):
            raise ShapeError(f"adjacency {self.adjacency.shape} != ({m}, {m})")
        if self.gcn_w.shape != (2 * self.base.n, 2 * self.base.n):
            raise ShapeError(f"gcn weight {self.gcn_w.shape} != 2n x 2n")
        if self.sigma not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.sigma!r}")
        if self.head not in ("v1", "v2"):
            raise ConfigError(f"unknown head variant {self.head!r}")
        if self.head == "v2":
            if self.fc_w is None or self.fc_b is None:
                raise ConfigError("head v2 requires fc_w and fc_b")
            if self.fc_w.shape[0] != 4 * self.base.n:
                raise ShapeError(f"fc_w {self.fc_w.shape} must have 4n rows")
        self.adjacency = np.asarray(self.adjacency, dtype=np.float64)
        self.adjacency.setflags(write=False)

    # -- parameters ------------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        out = {f"base.{k}": v for k, v in self.base.params().items()}
        out["gcn.w"] = self.gcn_w
        if self.head == "v2":
            out["head.w"] = self.fc_w
            out["head.b"] = self.fc_b
        return out

    # -- forward / backward -----------------------------------------------

    def forward(self, batch: np.ndarray):
        """Logits (B, m) from the graph scoring path.

        The base classifier's own affine output (and bias) is not used;
        its weight matrix enters only as the class embeddings.
        """
        _, caches = self.base.forward(batch)
        d = self.base.embedding_from_cache(caches)
        c = self.base.class_embeddings()
        x = assemble_node_features(d, c)
        h, gcn_cache = gcn_forward(self.adjacency, x, self.gcn_w, self.sigma)
        if self.head == "v1":
            s = score_v1(d, c, h)
            head_cache = None
        else:
            s, head_cache = score_v2(x, h, self.fc_w, self.fc_b)
        return s, (caches, d, c, x, h, gcn_cache, head_cache)

    def backward(self, cache, grad_logits: np.ndarray, freeze_base: bool = False):
        caches, d, c, x, h, gcn_cache, head_cache = cache
        grads: dict[str, np.ndarray] = {}
        if self.head == "v1":
            gd, gc, gh = score_v1_backward(grad_logits, d, c, h)
        else:
            gx_head, gh, gw_fc, gb_fc = score_v2_backward(grad_logits, head_cache, self.fc_w)
            grads["head.w"] = gw_fc
            grads["head.b"] = gb_fc
            gd, gc = 0.0, 0.0
        gx, gw = gcn_backward(gh, gcn_cache, self.adjacency, self.gcn_w, self.sigma)
        grads["gcn.w"] = gw
        if self.head == "v2":
            gx = gx + gx_head
        gd_x, gc_x = assemble_backward(gx)
        gd = gd_x + gd
        gc = gc_x + gc
        if freeze_base:
            base_grads = {k: np.zeros_like(v) for k, v in self.base.params().items()}
        else:
            base_grads = self.base.backward_from_embedding(caches, gd)
            last = len(self.base.layers) - 1
            base_grads[f"{last}.w"] = base_grads[f"{last}.w"] + gc
        for k, v in base_grads.items():
            grads[f"base.{k}"] = v
        return grads

    def predict(self, batch: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(batch)
        return logits.argmax(axis=1)


def init_pkgcn(
    base: Model,
    adjacency: np.ndarray,
    head: str = "v1",
    sigma: str = "relu",
    l: Optional[int] = None,
    seed: int = 0,
    w_noise_scale: float = 0.01,
) -> PkGcnModel:
    """Fresh Stage-2 parameters around a trained base model.

    The GCN weight starts at identity plus small seeded noise so the
    initial decision function stays close to the base model's.
    """
    rng = np.random.default_rng(seed)
    n = base.n
    dtype = base.class_embeddings().dtype
    gcn_w = np.eye(2 * n, dtype=dtype) + (
        w_noise_scale * rng.standard_normal((2 * n, 2 * n))
    ).astype(dtype)
    fc_w = fc_b = None
    if head == "v2":
        l = l or n
        # extra 1/sqrt(2l) factor: the score is a sum of l products of q
        # entries, so plain fan-in scaling saturates the softmax at init
        fc_w = he_uniform(rng, (4 * n, 2 * l), fan_in=4 * n, dtype=dtype)
        fc_w /= np.sqrt(2 * l)
        fc_b = np.zeros(2 * l, dtype=dtype)
    return PkGcnModel(
        base=base,
        adjacency=adjacency,
        gcn_w=gcn_w,
        sigma=sigma,
        head=head,
        fc_w=fc_w,
        fc_b=fc_b,
    )
