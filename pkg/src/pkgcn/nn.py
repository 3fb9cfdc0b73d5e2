"""Layer stack models: builders, forward/backward, embedding extraction.

A model is an ordered list of layers ending in a dense classifier.
The activation feeding that classifier is the *data embedding* and the
classifier's weight rows are the *class embeddings*; the base logits
are their inner products plus the classifier bias.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError, StateError


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float64) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base layer: holds parameters and a forward/backward pair."""

    kind = "base"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, g, cache):
        """Returns (grad_input, {param name: grad})."""
        raise NotImplementedError

    def out_shape(self, in_shape):
        raise NotImplementedError


class Conv(Layer):
    kind = "conv"

    def __init__(self, in_channels, filters, ksize, padding=0, rng=None, dtype=np.float64):
        super().__init__()
        self.padding = padding
        rng = rng or np.random.default_rng(0)
        fan_in = in_channels * ksize * ksize
        self.params["w"] = he_uniform(rng, (filters, in_channels, ksize, ksize), fan_in, dtype)
        self.params["b"] = np.zeros(filters, dtype=dtype)

    def forward(self, x):
        return ops.conv2d(x, self.params["w"], self.params["b"], self.padding), x

    def backward(self, g, cache):
        gx, gw, gb = ops.conv2d_backward(g, cache, self.params["w"], self.padding)
        return gx, {"w": gw, "b": gb}

    def out_shape(self, in_shape):
        c, h, w = in_shape
        f, _, kh, kw = self.params["w"].shape
        h2 = h + 2 * self.padding - kh + 1
        w2 = w + 2 * self.padding - kw + 1
        if h2 < 1 or w2 < 1:
            raise ShapeError(f"conv kernel {kh}x{kw} too large for input {in_shape}")
        return (f, h2, w2)


class MaxPool2(Layer):
    kind = "maxpool2"

    def forward(self, x):
        out, idx = ops.maxpool2(x)
        return out, (idx, x.shape)

    def backward(self, g, cache):
        idx, in_shape = cache
        return ops.maxpool2_backward(g, idx, in_shape), {}

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h % 2 or w % 2:
            raise ShapeError(f"maxpool2 needs even spatial dims, got {in_shape}")
        return (c, h // 2, w // 2)


class Relu(Layer):
    kind = "relu"

    def forward(self, x):
        return ops.relu(x), x

    def backward(self, g, cache):
        return ops.relu_backward(g, cache), {}

    def out_shape(self, in_shape):
        return in_shape


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, g, cache):
        return g.reshape(cache), {}

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)


class Dense(Layer):
    """Affine layer y = x W^T + b with W of shape (out, in).

    Row i of W is the weight vector for output unit i, so the final
    classifier's W doubles as the class-embedding matrix.
    """

    kind = "dense"

    def __init__(self, in_width, out_width, rng=None, dtype=np.float64):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.params["w"] = he_uniform(rng, (out_width, in_width), in_width, dtype)
        self.params["b"] = np.zeros(out_width, dtype=dtype)

    def forward(self, x):
        return x @ self.params["w"].T + self.params["b"], x

    def backward(self, g, cache):
        gw = g.T @ cache
        gb = g.sum(axis=0)
        gx = g @ self.params["w"]
        return gx, {"w": gw, "b": gb}

    def out_shape(self, in_shape):
        (w,) = in_shape
        if w != self.params["w"].shape[1]:
            raise ShapeError(
                f"dense expects width {self.params['w'].shape[1]}, got {in_shape}"
            )
        return (self.params["w"].shape[0],)


class Model:
    """Ordered layer stack ending in a dense classifier.

    ``m`` is the class count, ``n`` the embedding width (input width of
    the classifier).
    """

    def __init__(self, layers, in_shape, arch: str = "custom", width_scale: float = 1.0):
        if not layers or layers[-1].kind != "dense":
            raise ConfigError("model must end in a dense classifier")
        self.layers = layers
        self.in_shape = tuple(in_shape)
        self.arch = arch
        self.width_scale = width_scale
        shape = self.in_shape
        for layer in layers:  # validates compatibility at build time
            shape = layer.out_shape(shape)
        self.m = layers[-1].params["w"].shape[0]
        self.n = layers[-1].params["w"].shape[1]

    # -- parameter bookkeeping ------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                out[f"{i}.{name}"] = p
        return out

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        for key, v in values.items():
            idx, name = key.split(".")
            target = self.layers[int(idx)].params[name]
            if target.shape != v.shape:
                raise ShapeError(f"param {key}: shape {v.shape} != {target.shape}")
            target[...] = v

    def astype(self, dtype) -> "Model":
        for layer in self.layers:
            for name in layer.params:
                layer.params[name] = layer.params[name].astype(dtype)
        return self

    # -- forward / backward ---------------------------------------------

    def forward(self, batch: np.ndarray):
        if batch.shape[1:] != self.in_shape:
            raise ShapeError(f"batch shape {batch.shape[1:]} != model input {self.in_shape}")
        caches = []
        x = batch
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, caches, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
        if len(caches) != len(self.layers):
            raise StateError("cache does not match model layers")
        grads = {}
        g = grad_logits
        for i in range(len(self.layers) - 1, -1, -1):
            g, pg = self.layers[i].backward(g, caches[i])
            for name, gp in pg.items():
                grads[f"{i}.{name}"] = gp
        return grads

    def backward_from_embedding(self, caches, grad_embed: np.ndarray) -> dict[str, np.ndarray]:
        """Backprop starting at the data embedding, skipping the classifier.

        Returns gradients for every layer below the final dense; the
        classifier's own entries are zero-filled so optimizers see a
        complete gradient dict.
        """
        if len(caches) != len(self.layers):
            raise StateError("cache does not match model layers")
        grads = {}
        last = len(self.layers) - 1
        g = grad_embed
        for i in range(last - 1, -1, -1):
            g, pg = self.layers[i].backward(g, caches[i])
            for name, gp in pg.items():
                grads[f"{i}.{name}"] = gp
        for name, p in self.layers[last].params.items():
            grads[f"{last}.{name}"] = np.zeros_like(p)
        return grads

    # -- embeddings -------------------------------------------------------

    def data_embedding(self, batch: np.ndarray) -> np.ndarray:
        _, caches = self.forward(batch)
        return self.embedding_from_cache(caches)

    def embedding_from_cache(self, caches) -> np.ndarray:
        # the classifier's cached input is exactly the data embedding
        return caches[-1]

    def class_embeddings(self) -> np.ndarray:
        """m x n matrix; row i is the classifier weight vector for class i.

        Returned as a view so weight updates are reflected immediately.
        """
        return self.layers[-1].params["w"]

    def classifier_bias(self) -> np.ndarray:
        return self.layers[-1].params["b"]

    def predict(self, batch: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(batch)
        return logits.argmax(axis=1)


# ---------------------------------------------------------------------------
# presets


VGG11_STACK = [64, "M", 128, "M", 256, 256, "M", 512, 512, "M", 512, 512, "M"]


def build_base_model(
    arch: str,
    seed: int = 0,
    in_shape: Optional[tuple] = None,
    width_scale: float = 1.0,
    dtype=np.float64,
) -> Model:
    """Build one of the named presets: cnn1, cnn2 or vgg11.

    ``width_scale`` shrinks channel/width counts uniformly (used for
    desk-size gradient checks of the VGG preset).
    """
    rng = np.random.default_rng(seed)

    def s(width):
        return max(1, int(round(width * width_scale)))

    if arch == "cnn1":
        in_shape = in_shape or (1, 28, 28)
        layers = [
            Conv(in_shape[0], s(32), 3, rng=rng, dtype=dtype),
            Relu(),
            MaxPool2(),
            Flatten(),
        ]
        flat = int(np.prod(_stack_shape(layers, in_shape)))
        layers += [Dense(flat, s(128), rng=rng, dtype=dtype), Relu(), Dense(s(128), 10, rng=rng, dtype=dtype)]
    elif arch == "cnn2":
        in_shape = in_shape or (1, 28, 28)
        layers = [
            Conv(in_shape[0], s(32), 3, rng=rng, dtype=dtype),
            Relu(),
            MaxPool2(),
        ]
        mid = _stack_shape(layers, in_shape)
        # 4x4 kernel keeps the spatial dims even for the second pool on 28x28
        layers += [
            Conv(mid[0], s(64), 4, rng=rng, dtype=dtype),
            Relu(),
            MaxPool2(),
            Flatten(),
        ]
        flat = int(np.prod(_stack_shape(layers, in_shape)))
        layers += [Dense(flat, s(128), rng=rng, dtype=dtype), Relu(), Dense(s(128), 10, rng=rng, dtype=dtype)]
    elif arch == "vgg11":
        in_shape = in_shape or (3, 32, 32)
        layers = []
        channels = in_shape[0]
        for item in VGG11_STACK:
            if item == "M":
                layers.append(MaxPool2())
            else:
                layers.append(Conv(channels, s(item), 3, padding=1, rng=rng, dtype=dtype))
                layers.append(Relu())
                channels = s(item)
        layers.append(Flatten())
        flat = int(np.prod(_stack_shape(layers, in_shape)))
        layers += [Dense(flat, s(512), rng=rng, dtype=dtype), Relu(), Dense(s(512), 10, rng=rng, dtype=dtype)]
    else:
        raise ConfigError(f"unknown architecture preset: {arch!r}")
    return Model(layers, in_shape, arch=arch, width_scale=width_scale)


def _stack_shape(layers, in_shape):
    shape = in_shape
    for layer in layers:
        shape = layer.out_shape(shape)
    return shape
