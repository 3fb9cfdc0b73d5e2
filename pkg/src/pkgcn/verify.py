"""Self-check suites: gradient integrity, oracle equivalences, identities.

Each suite returns its worst observed error; the CLI ``verify`` command
runs all of them and fails on any threshold violation. The oracles here
are deliberately written as plain loops or second implementations,
independent of the vectorized production code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gcn, ops, simgraph
from .nn import build_base_model
from .optim import AdaDelta


@dataclass
class SuiteResult:
    name: str
    max_error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.threshold


def _conv_loop_oracle(x, w, b):
    B, C, H, W = x.shape
    F, _, kh, kw = w.shape
    out = np.zeros((B, F, H - kh + 1, W - kw + 1))
    for n in range(B):
        for f in range(F):
            for i in range(out.shape[2]):
                for j in range(out.shape[3]):
                    acc = 0.0
                    for c in range(C):
                        for u in range(kh):
                            for v in range(kw):
                                acc += x[n, c, i + u, j + v] * w[f, c, u, v]
                    out[n, f, i, j] = acc + b[f]
    return out


def suite_matmul_gradients(seeds=range(10)) -> SuiteResult:
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
        g = rng.standard_normal((3, 2))

        def fn(params):
            pa, pb = params
            out = ops.matmul(pa, pb)
            return float((out * g).sum()), list(ops.matmul_backward(g, pa, pb))

        worst = max(worst, ops.finite_difference_check(fn, [a, b]))
    return SuiteResult("matmul gradients", worst, 1e-5)


def suite_conv2d_oracle(seeds=range(5)) -> SuiteResult:
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 3, 8, 8))
        w = rng.standard_normal((3, 3, 3, 3))
        b = rng.standard_normal(3)
        diff = np.abs(ops.conv2d(x, w, b) - _conv_loop_oracle(x, w, b)).max()
        worst = max(worst, float(diff))
    return SuiteResult("conv2d vs direct summation", worst, 1e-10)


def suite_layer_gradients(seeds=range(10)) -> SuiteResult:
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        # conv2d
        x = rng.standard_normal((2, 2, 5, 5))
        w = rng.standard_normal((2, 2, 3, 3))
        b = rng.standard_normal(2)
        g = rng.standard_normal((2, 2, 3, 3))

        def fn_conv(params):
            px, pw, pb = params
            out = ops.conv2d(px, pw, pb)
            return float((out * g).sum()), list(ops.conv2d_backward(g, px, pw))

        worst = max(worst, ops.finite_difference_check(fn_conv, [x, w, b]))

        # maxpool2 (continuous random input: ties almost surely absent)
        xp = rng.standard_normal((1, 2, 4, 4))
        gp = rng.standard_normal((1, 2, 2, 2))

        def fn_pool(params):
            (p,) = params
            out, idx = ops.maxpool2(p)
            return float((out * gp).sum()), [ops.maxpool2_backward(gp, idx, p.shape)]

        worst = max(worst, ops.finite_difference_check(fn_pool, [xp]))

        # relu away from the kink
        xr = rng.standard_normal(16)
        xr = xr[np.abs(xr) > 1e-3]
        gr = rng.standard_normal(xr.shape)

        def fn_relu(params):
            (p,) = params
            return float((ops.relu(p) * gr).sum()), [ops.relu_backward(gr, p)]

        worst = max(worst, ops.finite_difference_check(fn_relu, [xr]))
    return SuiteResult("conv/pool/relu gradients", worst, 1e-5)


def suite_softmax_gradients(seeds=range(10)) -> SuiteResult:
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        logits = rng.standard_normal((3, 6))
        labels = rng.integers(0, 6, 3)

        def fn(params):
            (pl,) = params
            loss, grad, _ = ops.softmax_cross_entropy(pl, labels)
            return loss, [grad]

        worst = max(worst, ops.finite_difference_check(fn, [logits]))
    return SuiteResult("softmax cross-entropy gradients", worst, 1e-5)


def _model_fd(model, batch, labels, max_coords, rng, epsilon=1e-5):
    keys = list(model.params().keys())

    def fn(params):
        if hasattr(model, "base"):
            model.base.set_params({k[5:]: v for k, v in zip(keys, params) if k.startswith("base.")})
            model.gcn_w[...] = dict(zip(keys, params))["gcn.w"]
            if model.head == "v2":
                model.fc_w[...] = dict(zip(keys, params))["head.w"]
                model.fc_b[...] = dict(zip(keys, params))["head.b"]
        else:
            model.set_params(dict(zip(keys, params)))
        logits, cache = model.forward(batch)
        loss, grad, _ = ops.softmax_cross_entropy(logits, labels)
        grads = model.backward(cache, grad)
        return loss, [grads[k] for k in keys]

    initial = [model.params()[k].copy() for k in keys]
    return ops.finite_difference_check(
        fn, initial, epsilon=epsilon, max_coords=max_coords, rng=rng
    )


def suite_full_model_gradient() -> SuiteResult:
    rng = np.random.default_rng(0)
    model = build_base_model("cnn1", seed=0, in_shape=(1, 10, 10), width_scale=0.1)
    batch = rng.random((2, 1, 10, 10))
    labels = rng.integers(0, 10, 2)
    err = _model_fd(model, batch, labels, max_coords=40, rng=rng)
    return SuiteResult("full cnn gradient", err, 1e-5)


def _composite_suite(head: str) -> SuiteResult:
    rng = np.random.default_rng(1)
    base = build_base_model("cnn1", seed=1, in_shape=(1, 10, 10), width_scale=0.08)
    a = rng.random((10, 10)) * 0.2
    np.fill_diagonal(a, 0.0)
    model = gcn.init_pkgcn(base, simgraph.normalize(a), head=head, seed=2)
    batch = rng.random((2, 1, 10, 10))
    labels = rng.integers(0, 10, 2)
    err = _model_fd(model, batch, labels, max_coords=40, rng=rng)
    return SuiteResult(f"composite graph path ({head} head)", err, 1e-5)


def suite_composite_v1() -> SuiteResult:
    return _composite_suite("v1")


def suite_composite_v2() -> SuiteResult:
    return _composite_suite("v2")


def suite_adadelta_trace() -> SuiteResult:
    rng = np.random.default_rng(0)
    grads = rng.standard_normal(100)
    params = {"x": np.array([0.0])}
    opt = AdaDelta(params, rho=0.95, eps=1e-6)
    x, eg2, edx2 = 0.0, 0.0, 0.0
    worst = 0.0
    for g in grads:
        opt.step(params, {"x": np.array([g])})
        eg2 = 0.95 * eg2 + 0.05 * g * g
        dx = -np.sqrt(edx2 + 1e-6) / np.sqrt(eg2 + 1e-6) * g
        edx2 = 0.95 * edx2 + 0.05 * dx * dx
        x += dx
        worst = max(worst, abs(params["x"][0] - x))
    return SuiteResult("adadelta scalar trace vs recurrence", worst, 1e-12)


def suite_kipf_normalization() -> SuiteResult:
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        m = int(rng.integers(2, 9))
        a = rng.random((m, m))
        np.fill_diagonal(a, 0.0)
        a_tilde = a + np.eye(m)
        d_inv_sqrt = np.linalg.inv(np.sqrt(np.diag(a_tilde.sum(axis=1))))
        expected = d_inv_sqrt @ a_tilde @ d_inv_sqrt
        worst = max(worst, float(np.abs(simgraph.normalize(a) - expected).max()))
    return SuiteResult("adjacency normalization vs dense oracle", worst, 1e-12)


def suite_degenerate_equivalence() -> SuiteResult:
    base = build_base_model("cnn1", seed=3, in_shape=(1, 10, 10), width_scale=0.1)
    model = gcn.PkGcnModel(
        base=base,
        adjacency=np.eye(10),
        gcn_w=np.eye(2 * base.n),
        sigma="identity",
        head="v1",
    )
    rng = np.random.default_rng(4)
    batch = rng.random((20, 1, 10, 10))
    logits, _ = model.forward(batch)
    base_logits, _ = base.forward(batch)
    bias_free = base_logits - base.classifier_bias()
    err = float(np.abs(logits - 2 * bias_free).max())
    if not np.array_equal(logits.argmax(axis=1), bias_free.argmax(axis=1)):
        err = float("inf")
    return SuiteResult("degenerate equivalence (identity graph)", err, 1e-6)


ALL_SUITES = [
    suite_matmul_gradients,
    suite_conv2d_oracle,
    suite_layer_gradients,
    suite_softmax_gradients,
    suite_full_model_gradient,
    suite_composite_v1,
    suite_composite_v2,
    suite_adadelta_trace,
    suite_kipf_normalization,
    suite_degenerate_equivalence,
]


def run_all() -> list[SuiteResult]:
    return [suite() for suite in ALL_SUITES]
