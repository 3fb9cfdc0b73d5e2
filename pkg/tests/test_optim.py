import numpy as np
import pytest

from pkgcn.errors import ConfigError, NumericError, ShapeError
from pkgcn.optim import AdaDelta


def adadelta_scalar_oracle(grads, rho, eps):
    """Independent scalar recurrence: returns the sequence of x values."""
    x, eg2, edx2 = 0.0, 0.0, 0.0
    xs = []
    for g in grads:
        eg2 = rho * eg2 + (1 - rho) * g * g
        dx = -np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps) * g
        edx2 = rho * edx2 + (1 - rho) * dx * dx
        x += dx
        xs.append(x)
    return xs


class TestInit:
    def test_zero_accumulators_matching_shapes(self):
        params = {"a": np.ones((2, 3)), "b": np.ones(4)}
        opt = AdaDelta(params)
        for k, p in params.items():
            assert opt.eg2[k].shape == p.shape and not opt.eg2[k].any()
            assert opt.edx2[k].shape == p.shape and not opt.edx2[k].any()

    @pytest.mark.parametrize("rho,eps", [(0.0, 1e-6), (1.0, 1e-6), (0.5, 0.0), (0.5, -1.0)])
    def test_invalid_hyperparameters(self, rho, eps):
        with pytest.raises(ConfigError):
            AdaDelta({"a": np.ones(1)}, rho=rho, eps=eps)


class TestStep:
    def test_zero_gradient_leaves_params(self):
        params = {"a": np.array([1.0, 2.0])}
        opt = AdaDelta(params)
        opt.eg2["a"][...] = 0.4
        opt.step(params, {"a": np.zeros(2)})
        np.testing.assert_array_equal(params["a"], [1.0, 2.0])
        np.testing.assert_allclose(opt.eg2["a"], 0.95 * 0.4)

    def test_first_scalar_step(self):
        params = {"x": np.array([0.0])}
        opt = AdaDelta(params, rho=0.95, eps=1e-6)
        opt.step(params, {"x": np.array([1.0])})
        expected = -np.sqrt(1e-6) / np.sqrt(0.05 + 1e-6)
        assert params["x"][0] == pytest.approx(expected, rel=1e-9)
        assert params["x"][0] == pytest.approx(-4.472e-3, abs=1e-5)

    def test_100_step_trace_matches_oracle(self):
        rng = np.random.default_rng(0)
        grads = rng.standard_normal(100)
        params = {"x": np.array([0.0])}
        opt = AdaDelta(params, rho=0.95, eps=1e-6)
        trace = []
        for g in grads:
            opt.step(params, {"x": np.array([g])})
            trace.append(params["x"][0])
        np.testing.assert_allclose(trace, adadelta_scalar_oracle(grads, 0.95, 1e-6), atol=1e-12)

    def test_update_opposes_gradient(self):
        rng = np.random.default_rng(1)
        params = {"a": rng.standard_normal(50)}
        before = params["a"].copy()
        g = rng.standard_normal(50)
        g[np.abs(g) < 1e-3] = 1.0  # keep every coordinate active
        AdaDelta(params).step(params, {"a": g})
        assert np.all(np.sign(params["a"] - before) == -np.sign(g))

    def test_elementwise_permutation_equivariance(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(10)
        g = rng.standard_normal(10)
        perm = rng.permutation(10)

        p1 = {"a": x.copy()}
        AdaDelta(p1).step(p1, {"a": g})
        p2 = {"a": x[perm].copy()}
        AdaDelta(p2).step(p2, {"a": g[perm]})
        np.testing.assert_allclose(p1["a"][perm], p2["a"], atol=1e-15)

    def test_deterministic(self):
        def run():
            params = {"a": np.ones(3)}
            opt = AdaDelta(params)
            for i in range(5):
                opt.step(params, {"a": np.full(3, float(i + 1))})
            return params["a"]

        assert np.array_equal(run(), run())

    def test_shape_mismatch(self):
        params = {"a": np.ones(3)}
        with pytest.raises(ShapeError):
            AdaDelta(params).step(params, {"a": np.ones(4)})

    def test_nonfinite_grad(self):
        params = {"a": np.ones(2)}
        with pytest.raises(NumericError):
            AdaDelta(params).step(params, {"a": np.array([1.0, np.nan])})
