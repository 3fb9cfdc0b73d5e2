import numpy as np
import pytest

from pkgcn import nn, ops
from pkgcn.errors import ConfigError, ShapeError, StateError

from test_ops import conv2d_oracle


def param_count(model):
    return sum(p.size for p in model.params().values())


class TestBuildPresets:
    def test_cnn1_logit_shape(self):
        model = nn.build_base_model("cnn1", seed=0)
        logits, _ = model.forward(np.zeros((3, 1, 28, 28)))
        assert logits.shape == (3, 10)
        assert model.m == 10 and model.n == 128

    def test_cnn2_param_count(self):
        # conv(1->32,3x3) + conv(32->64,4x4) + dense(1600->128) + dense(128->10)
        expected = (32 * 9 + 32) + (64 * 32 * 16 + 64) + (128 * 1600 + 128) + (10 * 128 + 10)
        assert param_count(nn.build_base_model("cnn2", seed=5)) == expected

    def test_cnn1_param_count(self):
        expected = (32 * 9 + 32) + (128 * 5408 + 128) + (10 * 128 + 10)
        assert param_count(nn.build_base_model("cnn1", seed=5)) == expected

    def test_same_seed_bitwise_identical(self):
        a = nn.build_base_model("cnn1", seed=7)
        b = nn.build_base_model("cnn1", seed=7)
        for k, p in a.params().items():
            assert np.array_equal(p, b.params()[k])

    def test_different_seed_differs(self):
        a = nn.build_base_model("cnn1", seed=7)
        b = nn.build_base_model("cnn1", seed=8)
        assert not np.array_equal(a.params()["0.w"], b.params()["0.w"])

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            nn.build_base_model("resnet50")

    def test_vgg11_shapes(self):
        model = nn.build_base_model("vgg11", seed=0, width_scale=1 / 16)
        logits, _ = model.forward(np.zeros((2, 3, 32, 32)))
        assert logits.shape == (2, 10)
        assert model.n == 32  # 512 / 16

    def test_batch_shape_mismatch(self):
        model = nn.build_base_model("cnn1", seed=0)
        with pytest.raises(ShapeError):
            model.forward(np.zeros((1, 1, 27, 27)))


class TestForward:
    def test_zero_input_gives_classifier_bias(self):
        model = nn.build_base_model("cnn1", seed=0)
        bias = np.arange(10, dtype=np.float64)
        model.classifier_bias()[...] = bias
        logits, _ = model.forward(np.zeros((4, 1, 28, 28)))
        np.testing.assert_allclose(logits, np.tile(bias, (4, 1)))

    def test_logits_identity(self):
        model = nn.build_base_model("cnn1", seed=1)
        rng = np.random.default_rng(0)
        batch = rng.random((5, 1, 28, 28))
        logits, caches = model.forward(batch)
        d = model.embedding_from_cache(caches)
        c = model.class_embeddings()
        np.testing.assert_allclose(logits, d @ c.T + model.classifier_bias(), atol=1e-6)

    def test_matches_independent_forward_oracle(self):
        model = nn.build_base_model("cnn1", seed=3, in_shape=(1, 10, 10))
        rng = np.random.default_rng(4)
        batch = rng.random((2, 1, 10, 10))

        # second implementation: loop conv + manual pool/relu/dense
        p = model.params()
        a = conv2d_oracle(batch, p["0.w"], p["0.b"])
        a = np.maximum(a, 0)
        B, C, H, W = a.shape
        pooled = np.zeros((B, C, H // 2, W // 2))
        for i in range(H // 2):
            for j in range(W // 2):
                pooled[:, :, i, j] = a[:, :, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max(axis=(2, 3))
        flat = pooled.reshape(B, -1)
        hidden = np.maximum(flat @ p["4.w"].T + p["4.b"], 0)
        expected = hidden @ p["6.w"].T + p["6.b"]

        logits, _ = model.forward(batch)
        np.testing.assert_allclose(logits, expected, atol=1e-10)

    def test_data_embedding_matches_cache(self):
        model = nn.build_base_model("cnn1", seed=2)
        batch = np.random.default_rng(1).random((3, 1, 28, 28))
        _, caches = model.forward(batch)
        np.testing.assert_array_equal(
            model.data_embedding(batch), model.embedding_from_cache(caches)
        )
        assert model.data_embedding(batch).shape == (3, 128)

    def test_zero_input_embedding_is_clamped_bias(self):
        model = nn.build_base_model("cnn1", seed=0)
        hidden_bias = np.linspace(-1, 1, 128)
        model.layers[4].params["b"][...] = hidden_bias
        emb = model.data_embedding(np.zeros((1, 1, 28, 28)))
        np.testing.assert_allclose(emb[0], np.maximum(hidden_bias, 0))


class TestClassEmbeddings:
    def test_shape_and_view_semantics(self):
        model = nn.build_base_model("cnn1", seed=0)
        c = model.class_embeddings()
        assert c.shape == (10, 128)
        model.layers[-1].params["w"][3, 7] = 42.0
        assert model.class_embeddings()[3, 7] == 42.0

    def test_dot_with_embedding_reproduces_logits(self):
        model = nn.build_base_model("cnn1", seed=1)
        batch = np.random.default_rng(2).random((2, 1, 28, 28))
        logits, _ = model.forward(batch)
        d = model.data_embedding(batch)
        np.testing.assert_allclose(
            logits - model.classifier_bias(), d @ model.class_embeddings().T, atol=1e-6
        )


class TestBackward:
    def test_zero_grad_logits(self):
        model = nn.build_base_model("cnn1", seed=0, in_shape=(1, 10, 10))
        _, caches = model.forward(np.random.default_rng(0).random((2, 1, 10, 10)))
        grads = model.backward(caches, np.zeros((2, 10)))
        for g in grads.values():
            assert not g.any()

    def test_grads_deterministic(self):
        model = nn.build_base_model("cnn1", seed=0, in_shape=(1, 10, 10))
        batch = np.random.default_rng(0).random((2, 1, 10, 10))
        _, caches = model.forward(batch)
        g = np.random.default_rng(1).standard_normal((2, 10))
        g1 = model.backward(caches, g)
        g2 = model.backward(caches, g)
        for k in g1:
            assert np.array_equal(g1[k], g2[k])

    def test_stale_cache_rejected(self):
        model = nn.build_base_model("cnn1", seed=0, in_shape=(1, 10, 10))
        with pytest.raises(StateError):
            model.backward([None], np.zeros((1, 10)))

    @pytest.mark.parametrize("arch,in_shape", [("cnn1", (1, 10, 10)), ("cnn2", (1, 12, 12))])
    def test_full_model_gradient_check(self, arch, in_shape):
        model = nn.build_base_model(arch, seed=0, in_shape=in_shape, width_scale=0.1)
        rng = np.random.default_rng(0)
        batch = rng.random((4,) + in_shape)
        labels = rng.integers(0, 10, 4)
        keys = list(model.params().keys())

        def fn(params):
            model.set_params(dict(zip(keys, params)))
            logits, caches = model.forward(batch)
            loss, grad, _ = ops.softmax_cross_entropy(logits, labels)
            grads = model.backward(caches, grad)
            return loss, [grads[k] for k in keys]

        initial = [model.params()[k].copy() for k in keys]
        err = ops.finite_difference_check(fn, initial, max_coords=60, rng=rng)
        assert err <= 1e-4

    def test_backward_from_embedding_matches_fd(self):
        model = nn.build_base_model("cnn1", seed=0, in_shape=(1, 10, 10), width_scale=0.1)
        rng = np.random.default_rng(3)
        batch = rng.random((2, 1, 10, 10))
        gd = rng.standard_normal((2, model.n))
        keys = [k for k in model.params() if not k.startswith(f"{len(model.layers)-1}.")]

        def fn(params):
            model.set_params(dict(zip(keys, params)))
            _, caches = model.forward(batch)
            d = model.embedding_from_cache(caches)
            grads = model.backward_from_embedding(caches, gd)
            return float((d * gd).sum()), [grads[k] for k in keys]

        initial = [model.params()[k].copy() for k in keys]
        assert ops.finite_difference_check(fn, initial, max_coords=60, rng=rng) <= 1e-5
