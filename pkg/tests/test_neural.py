import numpy as np
import pytest

from tdanet import neural
from tdanet.neural import (
    Conv2d,
    Dense,
    ModelFormatError,
    NetworkSpec,
    Relu,
    TrainConfig,
    TrainingError,
    build_network,
    forward,
    grad_check,
    init_params,
    load_model,
    loss_and_grads,
    param_count,
    predict,
    save_model,
    train,
)


def small_inputs(spec, seed=0, batch=4):
    rng = np.random.default_rng(seed)
    inputs = {}
    if spec.uses_image:
        inputs["image"] = rng.standard_normal((batch, spec.image_side, spec.image_side))
    if spec.uses_curve:
        inputs["betti"] = rng.standard_normal((batch, spec.curve_len))
    labels = rng.integers(0, 2, batch)
    return inputs, labels


class TestBuildNetwork:
    def test_tda1_first_dense_parameter_count(self):
        spec = build_network("tda1", 16, 100)
        params = init_params(spec, seed=0)
        first = next(p for p in params if p)
        assert first["W"].size + first["b"].size == 100 * 64 + 64

    def test_base_flatten_width_at_128(self):
        spec = build_network("base", 128, 100)
        params = init_params(spec, seed=0)
        dense_shapes = [
            p["W"].shape
            for layer, p in zip(spec.layers(), params)
            if isinstance(layer, Dense)
        ]
        assert dense_shapes[0] == (8 * 8 * 64, 64)  # 4096 after four pools

    def test_tda123_fusion_input_width(self):
        spec = build_network("tda123", 64, 100)
        params = init_params(spec, seed=0)
        fusion_offset = len(spec.deep_stream) + len(spec.topo_stream)
        first_fusion = next(p for p in params[fusion_offset:] if p)
        assert first_fusion["W"].shape[0] == 64 + 32 + 100

    def test_conv_channel_progression(self):
        spec = build_network("base", 64, 10)
        channels = [l.channels for l in spec.deep_stream if isinstance(l, Conv2d)]
        assert channels == [16, 32, 64, 64]

    def test_rejects_bad_side(self):
        for side in (8, 20, 100):
            with pytest.raises(ValueError):
                build_network("base", side, 100)

    def test_rejects_unknown_variant(self):
        with pytest.raises(ValueError):
            build_network("tda13", 64, 100)

    def test_param_budget_is_modest(self):
        for variant in neural.VARIANTS:
            spec = build_network(variant, 128, 100)
            assert param_count(init_params(spec, 0)) < 350_000


class TestForward:
    def test_softmax_of_zero_logits_is_uniform(self):
        spec = build_network("tda1", 16, 10)
        params = init_params(spec, seed=0, dtype=np.float64)
        for p in params:
            for k in p:
                p[k][...] = 0.0
        inputs, _ = small_inputs(spec)
        probs = forward(spec, params, inputs)
        assert np.allclose(probs, 0.5)

    def test_delta_kernel_convolution_is_identity(self):
        x = np.random.default_rng(0).standard_normal((2, 1, 5, 5))
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        out, _ = neural._conv_forward(x, w, np.zeros(1))
        assert np.allclose(out, x)

    def test_probabilities_sum_to_one(self):
        for variant in neural.VARIANTS:
            spec = build_network(variant, 16, 12)
            params = init_params(spec, seed=1, dtype=np.float64)
            inputs, _ = small_inputs(spec, seed=2)
            probs = forward(spec, params, inputs)
            assert probs.shape == (4, 2)
            assert np.all((probs > 0) & (probs < 1))
            assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_shape_mismatch_raises(self):
        spec = build_network("tda1", 16, 12)
        params = init_params(spec, seed=0)
        with pytest.raises(ValueError, match="betti"):
            forward(spec, params, {"betti": np.zeros((2, 5))})
        with pytest.raises(ValueError, match="requires"):
            forward(spec, params, {})


class TestLossAndGrads:
    def test_confident_correct_prediction_has_zero_loss(self):
        spec = build_network("tda1", 16, 4)
        params = init_params(spec, seed=0, dtype=np.float64)
        inputs = {"betti": np.ones((1, 4))}
        # drive the true-class logit far up
        last = [p for p in params if p][-1]
        last["W"][...] = 0.0
        last["b"][:] = [50.0, -50.0]
        loss, _ = loss_and_grads(spec, params, inputs, np.array([0]))
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_uniform_prediction_loss_is_ln2(self):
        spec = build_network("tda1", 16, 4)
        params = init_params(spec, seed=0, dtype=np.float64)
        for p in params:
            for k in p:
                p[k][...] = 0.0
        loss, _ = loss_and_grads(spec, params, {"betti": np.ones((2, 4))}, np.array([0, 1]))
        assert loss == pytest.approx(np.log(2), abs=1e-9)

    def test_gradient_shapes_match_params(self):
        spec = build_network("tda12", 16, 8)
        params = init_params(spec, seed=0, dtype=np.float64)
        inputs, labels = small_inputs(spec)
        _, grads = loss_and_grads(spec, params, inputs, labels)
        for p, g in zip(params, grads):
            assert set(p) == set(g)
            for k in p:
                assert p[k].shape == g[k].shape

    def test_rejects_bad_labels(self):
        spec = build_network("tda1", 16, 4)
        params = init_params(spec, seed=0, dtype=np.float64)
        with pytest.raises(ValueError):
            loss_and_grads(spec, params, {"betti": np.ones((1, 4))}, np.array([2]))
        with pytest.raises(ValueError):
            loss_and_grads(spec, params, {"betti": np.ones((0, 4))}, np.array([]))


class TestGradCheck:
    def test_dense_only_network(self):
        spec = build_network("tda1", 16, 10)
        params = init_params(spec, seed=0, dtype=np.float64)
        inputs, labels = small_inputs(spec, seed=1)
        assert grad_check(spec, params, inputs, labels, seed=2) < 1e-6

    def test_conv_and_pool_network(self):
        spec = build_network("base", 16, 10)
        params = init_params(spec, seed=0, dtype=np.float64)
        inputs, labels = small_inputs(spec, seed=1)
        assert grad_check(spec, params, inputs, labels, seed=2) < 1e-5

    def test_requires_double_precision(self):
        spec = build_network("tda1", 16, 4)
        params = init_params(spec, seed=0, dtype=np.float32)
        inputs, labels = small_inputs(spec)
        with pytest.raises(ValueError, match="double"):
            grad_check(spec, params, inputs, labels)


class TestTrain:
    def _toy_dataset(self, n=60, seed=5):
        # linearly separable in the first coordinate
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, n)
        x = rng.standard_normal((n, 2)) * 0.2
        x[:, 0] += np.where(labels == 1, 2.0, -2.0)
        return {"betti": x}, labels

    def test_separable_toy_reaches_high_accuracy(self):
        spec = build_network("tda1", 16, 2)
        inputs, labels = self._toy_dataset()
        config = TrainConfig(epochs=200, batch_size=16, seed=0, precision="double")
        params, history = train(spec, (inputs, labels), config)
        preds = predict(spec, params, inputs)
        assert (preds == labels).mean() >= 0.99
        assert len(history) == 200

    def test_same_seed_is_bit_identical(self):
        spec = build_network("tda1", 16, 6)
        inputs, labels = small_inputs(spec, seed=3, batch=20)
        config = TrainConfig(epochs=5, seed=42, precision="double")
        a, _ = train(spec, (inputs, labels), config)
        b, _ = train(spec, (inputs, labels), config)
        for pa, pb in zip(a, b):
            for k in pa:
                assert np.array_equal(pa[k], pb[k])

    def test_zero_learning_rate_keeps_initialization(self):
        spec = build_network("tda1", 16, 6)
        inputs, labels = small_inputs(spec, seed=3, batch=12)
        config = TrainConfig(learning_rate=0.0, epochs=3, seed=7, precision="double")
        params, _ = train(spec, (inputs, labels), config)
        init = init_params(spec, 7, np.float64)
        for p, q in zip(params, init):
            for k in p:
                assert np.array_equal(p[k], q[k])

    def test_divergence_raises_with_epoch(self):
        spec = build_network("tda1", 16, 2)
        inputs, labels = self._toy_dataset(n=20)
        config = TrainConfig(learning_rate=1e12, epochs=10, optimizer="sgd",
                             seed=0, precision="single")
        with np.errstate(all="ignore"), pytest.raises(TrainingError, match="epoch"):
            train(spec, ({"betti": inputs["betti"] * 1e6}, labels), config)

    def test_sgd_optimizer_runs(self):
        spec = build_network("tda1", 16, 2)
        inputs, labels = self._toy_dataset(n=30)
        config = TrainConfig(epochs=50, optimizer="sgd", learning_rate=0.1,
                             seed=1, precision="double")
        params, _ = train(spec, (inputs, labels), config)
        assert (predict(spec, params, inputs) == labels).mean() >= 0.9


class TestPredict:
    def test_argmax_labels(self):
        spec = build_network("tda1", 16, 4)
        params = init_params(spec, seed=0, dtype=np.float64)
        last = [p for p in params if p][-1]
        last["W"][...] = 0.0
        inputs = {"betti": np.ones((2, 4))}
        last["b"][:] = [5.0, -5.0]
        assert list(predict(spec, params, inputs)) == [0, 0]
        last["b"][:] = [-5.0, 5.0]
        assert list(predict(spec, params, inputs)) == [1, 1]

    def test_exact_tie_goes_to_class_zero(self):
        spec = build_network("tda1", 16, 4)
        params = init_params(spec, seed=0, dtype=np.float64)
        for p in params:
            for k in p:
                p[k][...] = 0.0
        assert list(predict(spec, params, {"betti": np.ones((3, 4))})) == [0, 0, 0]


class TestStreamFusion:
    def test_streams_interact_only_through_concatenation(self):
        spec = build_network("tda12", 16, 8)
        params = init_params(spec, seed=0, dtype=np.float64)
        rng = np.random.default_rng(4)
        image = rng.standard_normal((3, 16, 16))

        # silence the topological stream's final dense layer: its output
        # becomes constant zero, so the betti input must not matter
        topo_slice = slice(len(spec.deep_stream), len(spec.deep_stream) + len(spec.topo_stream))
        topo_params = [p for p in params[topo_slice] if p]
        topo_params[-1]["W"][...] = 0.0
        topo_params[-1]["b"][...] = 0.0
        a = forward(spec, params, {"image": image, "betti": rng.standard_normal((3, 8))})
        b = forward(spec, params, {"image": image, "betti": rng.standard_normal((3, 8))})
        assert np.array_equal(a, b)
        c = forward(spec, params, {"image": rng.standard_normal((3, 16, 16)),
                                   "betti": np.zeros((3, 8))})
        assert not np.allclose(a, c)

    def test_silenced_deep_stream_ignores_image(self):
        spec = build_network("tda12", 16, 8)
        params = init_params(spec, seed=0, dtype=np.float64)
        rng = np.random.default_rng(4)
        deep_params = [p for p in params[: len(spec.deep_stream)] if p]
        deep_params[-1]["W"][...] = 0.0
        deep_params[-1]["b"][...] = 0.0
        betti = rng.standard_normal((2, 8))
        a = forward(spec, params, {"image": rng.standard_normal((2, 16, 16)), "betti": betti})
        b = forward(spec, params, {"image": rng.standard_normal((2, 16, 16)), "betti": betti})
        assert np.array_equal(a, b)


class TestSerialization:
    def test_round_trip_is_bit_exact(self, tmp_path):
        spec = build_network("tda123", 16, 8)
        params = init_params(spec, seed=3, dtype=np.float32)
        path = tmp_path / "model.bin"
        save_model(path, spec, params)
        loaded_spec, loaded = load_model(path)
        assert loaded_spec == spec
        for p, q in zip(params, loaded):
            for k in p:
                assert np.array_equal(p[k], q[k])
        path2 = tmp_path / "model2.bin"
        save_model(path2, loaded_spec, loaded)
        assert path.read_bytes() == path2.read_bytes()

    def test_magic_bytes(self, tmp_path):
        spec = build_network("tda1", 16, 4)
        path = tmp_path / "model.bin"
        save_model(path, spec, init_params(spec, 0))
        assert path.read_bytes()[:4] == b"TDAN"

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bogus.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_truncated_file_rejected(self, tmp_path):
        spec = build_network("tda1", 16, 4)
        path = tmp_path / "model.bin"
        save_model(path, spec, init_params(spec, 0))
        data = path.read_bytes()
        truncated = tmp_path / "truncated.bin"
        truncated.write_bytes(data[: len(data) // 2])
        with pytest.raises(ModelFormatError, match="truncated"):
            load_model(truncated)

    def test_wrong_version_rejected(self, tmp_path):
        spec = build_network("tda1", 16, 4)
        path = tmp_path / "model.bin"
        save_model(path, spec, init_params(spec, 0))
        data = bytearray(path.read_bytes())
        data[4] = 99
        path.write_bytes(bytes(data))
        with pytest.raises(ModelFormatError, match="version"):
            load_model(path)
