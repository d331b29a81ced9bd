import numpy as np
import pytest

from oracles import numeric_gradient
from relevis.nn import (Adam, BatchNorm3D, Conv3D, Dense, Dropout, Flatten,
                        MaxPool3D, ReLU, Softmax, TrainConfig, build_model,
                        loss_and_grads)
from relevis.errors import ShapeError

PROBES = 20
H = 1e-5
TOL = 1e-6


def _probe(arr, rng, n=PROBES):
    if arr.size <= n:
        return np.arange(arr.size)
    return rng.choice(arr.size, size=n, replace=False)


def _rel_err(a, b, floor=1e-8):
    # the floor keeps near-zero gradients from demanding more precision
    # than central differences can deliver
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.max(np.abs(a - b) / denom)


def _forward(layer, x, mode, seed):
    cache = {}
    rng = np.random.default_rng(seed) if seed is not None else None
    if isinstance(layer, BatchNorm3D):
        out = layer.forward(x, cache, mode, rng, update_stats=False)
    else:
        out = layer.forward(x, cache, mode, rng)
    return out, cache


def _check_layer_gradients(layer, x, mode="infer", seed=None):
    """Finite differences against backward for the input and every
    parameter, all in float64."""
    rng = np.random.default_rng(99)
    out0, _ = _forward(layer, x, mode, seed)
    v = np.random.default_rng(7).standard_normal(out0.shape)

    def scalar():
        out, _ = _forward(layer, x, mode, seed)
        return float(np.sum(out * v))

    out, cache = _forward(layer, x, mode, seed)
    gx, gp = layer.backward(v.astype(out.dtype), cache)

    idx = _probe(x, rng)
    fd = numeric_gradient(scalar, x, idx, H)
    assert _rel_err(fd, gx.reshape(-1)[idx]) < TOL
    for name, arr in layer.parameters().items():
        idxp = _probe(arr, rng)
        fdp = numeric_gradient(scalar, arr, idxp, H)
        assert _rel_err(fdp, gp[name].reshape(-1)[idxp]) < TOL


class TestLayerGradients:
    def test_conv3d(self, rng):
        layer = Conv3D(2, 3, rng=rng, dtype=np.float64)
        x = rng.standard_normal((2, 2, 4, 5, 4))
        _check_layer_gradients(layer, x)

    def test_dense(self, rng):
        layer = Dense(11, 4, rng=rng, dtype=np.float64)
        x = rng.standard_normal((3, 11))
        _check_layer_gradients(layer, x)

    def test_relu(self, rng):
        layer = ReLU()
        x = rng.standard_normal((2, 2, 4, 4, 4))
        x[np.abs(x) < 0.01] = 0.5  # keep probes away from the kink
        _check_layer_gradients(layer, x)

    def test_maxpool(self, rng):
        layer = MaxPool3D()
        # well-separated values so h never flips a window winner
        x = rng.permutation(4 * 4 * 4 * 2).astype(np.float64).reshape(1, 2, 4, 4, 4)
        _check_layer_gradients(layer, x)

    def test_batchnorm_train_mode(self, rng):
        layer = BatchNorm3D(3, dtype=np.float64)
        layer.gamma[:] = rng.uniform(0.5, 1.5, 3)
        layer.beta[:] = rng.standard_normal(3)
        x = rng.standard_normal((2, 3, 4, 4, 2))
        _check_layer_gradients(layer, x, mode="train")

    def test_batchnorm_infer_mode(self, rng):
        layer = BatchNorm3D(3, dtype=np.float64)
        layer.moving_mean[:] = rng.standard_normal(3)
        layer.moving_var[:] = rng.uniform(0.5, 2.0, 3)
        x = rng.standard_normal((2, 3, 4, 4, 2))
        _check_layer_gradients(layer, x, mode="infer")

    def test_dropout_with_fixed_mask(self, rng):
        layer = Dropout(0.25)
        x = rng.standard_normal((4, 50))
        _check_layer_gradients(layer, x, mode="train", seed=5)

    def test_flatten(self, rng):
        layer = Flatten()
        x = rng.standard_normal((2, 3, 2, 2, 2))
        _check_layer_gradients(layer, x)

    def test_softmax(self, rng):
        layer = Softmax()
        x = rng.standard_normal((4, 3))
        _check_layer_gradients(layer, x)


class TestFullNetworkGradients:
    def test_loss_gradients_float64(self, rng):
        model = build_model((8, 8, 8), seed=4, dtype=np.float64)
        x = rng.standard_normal((2, 1, 8, 8, 8))
        labels = np.array([0, 1])
        cfg = TrainConfig(class_weights=(1.3, 0.8), l2=1e-3)

        def loss():
            val, _, _ = loss_and_grads(model, x, labels, cfg,
                                       rng=np.random.default_rng(11),
                                       update_stats=False)
            return val

        _, grads, _ = loss_and_grads(model, x, labels, cfg,
                                     rng=np.random.default_rng(11),
                                     update_stats=False)
        probe_rng = np.random.default_rng(3)
        checked = 0
        for (li, name), arr in model.parameters():
            idx = _probe(arr, probe_rng, n=4)
            fd = numeric_gradient(loss, arr, idx, H)
            assert _rel_err(fd, grads[(li, name)].reshape(-1)[idx], 1e-5) < 1e-5, \
                f"layer {li} {name}"
            checked += len(idx)
        assert checked >= 40

    def test_input_gradient_float64(self, rng):
        model = build_model((8, 8, 8), seed=4, dtype=np.float64)
        x = rng.standard_normal((1, 1, 8, 8, 8))
        labels = np.array([1])
        cfg = TrainConfig(class_weights=None, l2=0.0)

        def loss():
            val, _, _ = loss_and_grads(model, x, labels, cfg,
                                       rng=np.random.default_rng(2),
                                       update_stats=False)
            return val

        probs, trace = model.forward_batch(x, mode="train",
                                           rng=np.random.default_rng(2),
                                           update_stats=False)
        dlogits = probs.copy()
        dlogits[0, 1] -= 1
        gx, _ = model.backward(dlogits, trace)
        idx = _probe(x, np.random.default_rng(8))
        fd = numeric_gradient(loss, x, idx, H)
        assert _rel_err(fd, gx.reshape(-1)[idx], 1e-5) < 1e-5


class TestLayerBehavior:
    def test_dense_shape_check(self):
        layer = Dense(4, 2, rng=np.random.default_rng(0))
        with pytest.raises(ShapeError):
            layer.forward(np.zeros((2, 5), dtype=np.float32), {})

    def test_dropout_identity_outside_train(self, rng):
        layer = Dropout(0.5)
        x = rng.standard_normal((3, 8)).astype(np.float32)
        out = layer.forward(x, {}, mode="infer")
        np.testing.assert_array_equal(out, x)

    def test_dropout_train_needs_rng(self):
        layer = Dropout(0.5)
        with pytest.raises(ValueError):
            layer.forward(np.zeros((2, 2), dtype=np.float32), {}, mode="train")

    def test_dropout_scaling_preserves_expectation(self):
        layer = Dropout(0.25)
        x = np.ones((100, 100), dtype=np.float64)
        out = layer.forward(x, {}, mode="train", rng=np.random.default_rng(0))
        kept = out[out != 0]
        assert kept[0] == pytest.approx(1.0 / 0.75)
        assert out.mean() == pytest.approx(1.0, abs=0.02)

    def test_softmax_rows_sum_to_one(self, rng):
        layer = Softmax()
        out = layer.forward(rng.standard_normal((5, 2)).astype(np.float32), {})
        np.testing.assert_allclose(out.sum(axis=1), 1.0, rtol=1e-6)
        assert np.all(out > 0)

    def test_softmax_overflow_safe(self):
        layer = Softmax()
        out = layer.forward(np.array([[1000.0, 0.0]], dtype=np.float32), {})
        assert np.all(np.isfinite(out))
        assert out[0, 0] == pytest.approx(1.0)

    def test_batchnorm_moving_stats_update(self, rng):
        layer = BatchNorm3D(2, momentum=0.9)
        x = (rng.standard_normal((4, 2, 2, 2, 2)) * 3 + 1).astype(np.float32)
        layer.forward(x, {}, mode="train")
        expect_mean = 0.1 * x.mean(axis=(0, 2, 3, 4))
        np.testing.assert_allclose(layer.moving_mean, expect_mean, rtol=1e-5)
        frozen = layer.moving_mean.copy()
        layer.forward(x, {}, mode="train", update_stats=False)
        np.testing.assert_array_equal(layer.moving_mean, frozen)

    def test_glorot_limits(self):
        layer = Dense(100, 50, rng=np.random.default_rng(0))
        limit = np.sqrt(6.0 / 150.0)
        assert np.abs(layer.w).max() <= limit
        assert layer.w.std() == pytest.approx(limit / np.sqrt(3.0), rel=0.05)
        conv = Conv3D(2, 5, rng=np.random.default_rng(0))
        climit = np.sqrt(6.0 / (2 * 27 + 5 * 27))
        assert np.abs(conv.w).max() <= climit
        assert np.all(conv.b == 0)


class TestAdam:
    def test_first_steps_match_hand_computation(self):
        w = np.array([1.0], dtype=np.float64)
        opt = Adam([(("w",), w)], lr=0.1)
        g = {("w",): np.array([0.5])}
        opt.step(g)
        # constant gradient: bias-corrected m/sqrt(v) is exactly g/|g|
        expect1 = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8)
        assert w[0] == pytest.approx(expect1, abs=1e-12)
        opt.step(g)
        assert w[0] == pytest.approx(expect1 - 0.1 * 0.5 / (0.5 + 1e-8), abs=1e-9)

    def test_updates_in_place(self):
        w = np.ones(3, dtype=np.float32)
        opt = Adam([(("w",), w)], lr=0.01)
        before = w.copy()
        opt.step({("w",): np.ones(3, dtype=np.float32)})
        assert np.all(w < before)
