"""Layers, backbones and the model container.

Layer tests drive the channels-last (batch, length, channels) arrays the
layers use internally; model tests go through the channels-first public
boundary.
"""

import numpy as np
import pytest

from helpers import central_difference, check_model_gradients, relative_error
from tfnet.kernels import KernelFamily, init_params
from tfnet.nn import (
    BACKBONES,
    MODES,
    AdaptiveAvgPool,
    BatchNorm1d,
    Conv1d,
    Dense,
    Flatten,
    MaxPool,
    Model,
    ReLU,
    Residual,
    assemble_model,
    build_backbone,
    softmax_cross_entropy,
)
from tfnet.tfconv import TFconvLayer


def rng_(seed=0):
    return np.random.default_rng(seed)


class TestConv1d:
    def test_valid_output_length(self):
        conv = Conv1d(2, 3, 5, rng_())
        out = conv.forward(rng_(1).normal(size=(4, 20, 2)))
        assert out.shape == (4, 16, 3)

    def test_same_padding_preserves_length(self):
        conv = Conv1d(1, 2, 7, rng_(), padding="same")
        out = conv.forward(rng_(2).normal(size=(3, 25, 1)))
        assert out.shape == (3, 25, 2)

    def test_matches_loop_oracle(self):
        conv = Conv1d(2, 3, 4, rng_(3))
        x = rng_(4).normal(size=(1, 10, 2))
        out = conv.forward(x)
        for o in range(3):
            for t in range(7):
                want = conv.bias[o]
                for m in range(4):
                    for c in range(2):
                        want += x[0, t + m, c] * conv.weight[o, c, m]
                assert abs(out[0, t, o] - want) < 1e-12

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Conv1d(3, 2, 3, rng_()).forward(np.zeros((1, 8, 2)))

    def test_input_shorter_than_kernel_rejected(self):
        with pytest.raises(ValueError):
            Conv1d(1, 1, 9, rng_()).forward(np.zeros((1, 5, 1)))

    def test_init_bound(self):
        conv = Conv1d(4, 8, 5, rng_(5))
        assert np.max(np.abs(conv.weight)) <= np.sqrt(6.0 / 20)
        np.testing.assert_array_equal(conv.bias, 0.0)

    def test_gradients_match_finite_differences(self):
        conv = Conv1d(2, 3, 3, rng_(6), padding="same")
        x = rng_(7).normal(size=(2, 12, 2))
        w = rng_(8).normal(size=(2, 12, 3))

        def loss():
            return float(np.sum(w * conv.forward(x)))

        loss()
        conv.zero_grad()
        gx = conv.backward(w)
        for arr, grads in ((conv.weight, conv.wgrad), (conv.bias, conv.bgrad), (x, gx)):
            for flat in rng_(9).choice(arr.size, size=min(12, arr.size), replace=False):
                index = np.unravel_index(int(flat), arr.shape)
                numeric = central_difference(loss, arr, index)
                assert relative_error(float(grads[index]), numeric) < 1e-6


class TestBatchNorm:
    def test_training_normalizes_batch(self):
        bn = BatchNorm1d(3)
        x = rng_(10).normal(loc=2.0, scale=4.0, size=(8, 16, 3))
        out = bn.forward(x, training=True)
        assert np.max(np.abs(out.mean(axis=(0, 1)))) < 1e-10
        np.testing.assert_allclose(out.std(axis=(0, 1)), 1.0, atol=1e-3)

    def test_running_stats_track_batches(self):
        bn = BatchNorm1d(2, momentum=0.1)
        x = rng_(11).normal(loc=5.0, size=(16, 8, 2))
        bn.forward(x, training=True)
        want_mean = 0.1 * x.mean(axis=(0, 1))
        np.testing.assert_allclose(bn.running_mean, want_mean, rtol=1e-10)

    def test_eval_uses_running_stats(self):
        bn = BatchNorm1d(2)
        bn.running_mean[:] = [1.0, -1.0]
        bn.running_var[:] = [4.0, 0.25]
        x = np.ones((1, 4, 2))
        out = bn.forward(x, training=False)
        want = (1.0 - bn.running_mean) / np.sqrt(bn.running_var + bn.eps)
        np.testing.assert_allclose(out[0, 0], want, rtol=1e-10)

    def test_single_sample_training_rejected(self):
        with pytest.raises(ValueError):
            BatchNorm1d(2).forward(np.zeros((1, 8, 2)), training=True)

    def test_gradients_match_finite_differences(self):
        bn = BatchNorm1d(2)
        bn.gamma[:] = [1.3, 0.7]
        bn.beta[:] = [0.2, -0.1]
        x = rng_(12).normal(size=(4, 6, 2))
        w = rng_(13).normal(size=(4, 6, 2))

        def loss():
            return float(np.sum(w * bn.forward(x, training=True)))

        loss()
        bn.zero_grad()
        gx = bn.backward(w)
        for arr, grads in ((bn.gamma, bn.ggrad), (bn.beta, bn.bgrad), (x, gx)):
            for flat in range(min(arr.size, 10)):
                index = np.unravel_index(flat, arr.shape)
                numeric = central_difference(loss, arr, index)
                assert relative_error(float(grads[index]), numeric) < 1e-5


class TestPoolingAndActivation:
    def test_relu(self):
        layer = ReLU()
        x = np.array([[[-1.0, 0.0], [2.0, -3.0]]])
        np.testing.assert_array_equal(layer.forward(x), [[[0.0, 0.0], [2.0, 0.0]]])
        g = np.ones_like(x)
        np.testing.assert_array_equal(layer.backward(g), [[[0.0, 0.0], [1.0, 0.0]]])

    def test_maxpool_width_two(self):
        layer = MaxPool(2)
        x = np.array([[[1.0], [3.0], [2.0], [2.0], [5.0]]])
        out = layer.forward(x)
        np.testing.assert_array_equal(out[:, :, 0], [[3.0, 2.0]])  # remainder dropped

    def test_maxpool_tie_routes_to_earlier_slot(self):
        layer = MaxPool(2)
        x = np.array([[[4.0], [4.0]]])
        layer.forward(x)
        gx = layer.backward(np.array([[[1.0]]]))
        np.testing.assert_array_equal(gx[:, :, 0], [[1.0, 0.0]])

    def test_maxpool_general_width_matches_reduce(self):
        layer = MaxPool(3)
        x = rng_(14).normal(size=(2, 9, 4))
        out = layer.forward(x)
        np.testing.assert_allclose(out, x.reshape(2, 3, 3, 4).max(axis=2))

    def test_maxpool_backward_routes_to_argmax(self):
        layer = MaxPool(2)
        x = rng_(15).normal(size=(3, 10, 2))
        out = layer.forward(x)
        g = rng_(16).normal(size=out.shape)
        gx = layer.backward(g)
        assert gx.shape == x.shape
        np.testing.assert_allclose(gx.sum(axis=1), g.sum(axis=1), rtol=1e-12)
        assert np.count_nonzero(gx) == g.size

    def test_adaptive_pool_divisible(self):
        layer = AdaptiveAvgPool(4)
        x = rng_(17).normal(size=(2, 16, 3))
        out = layer.forward(x)
        np.testing.assert_allclose(out, x.reshape(2, 4, 4, 3).mean(axis=2))

    def test_adaptive_pool_indivisible_covers_input(self):
        layer = AdaptiveAvgPool(4)
        x = rng_(18).normal(size=(1, 10, 1))
        out = layer.forward(x)
        assert out.shape == (1, 4, 1)
        # each bin is the mean of its slice
        starts, ends = layer._edges(10)
        for i, (s, e) in enumerate(zip(starts, ends)):
            assert out[0, i, 0] == pytest.approx(x[0, s:e, 0].mean())

    def test_adaptive_pool_gradient(self):
        layer = AdaptiveAvgPool(3)
        x = rng_(19).normal(size=(2, 11, 2))
        w = rng_(20).normal(size=(2, 3, 2))

        def loss():
            return float(np.sum(w * layer.forward(x)))

        loss()
        gx = layer.backward(w)
        for flat in rng_(21).choice(x.size, size=10, replace=False):
            index = np.unravel_index(int(flat), x.shape)
            numeric = central_difference(loss, x, index)
            assert relative_error(float(gx[index]), numeric) < 1e-6

    def test_pool_too_short_rejected(self):
        with pytest.raises(ValueError):
            AdaptiveAvgPool(8).forward(np.zeros((1, 4, 1)))


class TestDenseAndFlatten:
    def test_dense_affine(self):
        layer = Dense(3, 2, rng_(22))
        x = rng_(23).normal(size=(4, 3))
        np.testing.assert_allclose(layer.forward(x), x @ layer.weight.T + layer.bias)

    def test_dense_shape_rejected(self):
        with pytest.raises(ValueError):
            Dense(3, 2, rng_()).forward(np.zeros((4, 5)))

    def test_dense_gradients(self):
        layer = Dense(4, 3, rng_(24))
        x = rng_(25).normal(size=(5, 4))
        w = rng_(26).normal(size=(5, 3))

        def loss():
            return float(np.sum(w * layer.forward(x)))

        loss()
        layer.zero_grad()
        gx = layer.backward(w)
        np.testing.assert_allclose(layer.wgrad, w.T @ x, rtol=1e-12)
        np.testing.assert_allclose(layer.bgrad, w.sum(axis=0), rtol=1e-12)
        np.testing.assert_allclose(gx, w @ layer.weight, rtol=1e-12)

    def test_flatten_round_trip(self):
        layer = Flatten()
        x = rng_(27).normal(size=(3, 4, 5))
        out = layer.forward(x)
        assert out.shape == (3, 20)
        np.testing.assert_array_equal(layer.backward(out), x)


class TestResidual:
    def test_identity_skip(self):
        block = Residual([ReLU()])
        x = np.array([[[-2.0], [3.0]]])
        np.testing.assert_array_equal(block.forward(x), [[[-2.0], [6.0]]])

    def test_shape_change_rejected(self):
        block = Residual([MaxPool(2)])
        with pytest.raises(ValueError):
            block.forward(np.zeros((1, 8, 1)))

    def test_gradients_flow_both_paths(self):
        block = Residual([Conv1d(2, 2, 3, rng_(28), padding="same"), ReLU()])
        x = rng_(29).normal(size=(2, 10, 2))
        w = rng_(30).normal(size=(2, 10, 2))

        def loss():
            return float(np.sum(w * block.forward(x)))

        loss()
        block.zero_grad()
        gx = block.backward(w)
        for flat in rng_(31).choice(x.size, size=8, replace=False):
            index = np.unravel_index(int(flat), x.shape)
            numeric = central_difference(loss, x, index)
            assert relative_error(float(gx[index]), numeric) < 1e-6
        conv = block.sublayers[0]
        numeric = central_difference(loss, conv.weight, (0, 0, 0))
        assert relative_error(float(conv.wgrad[0, 0, 0]), numeric) < 1e-6


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_give_log_n(self):
        loss, _ = softmax_cross_entropy(np.zeros((4, 5)), np.array([0, 1, 2, 3]))
        assert loss == pytest.approx(np.log(5.0), abs=1e-12)

    def test_gradient_rows_sum_to_zero(self):
        logits = rng_(32).normal(size=(6, 5))
        _, grad = softmax_cross_entropy(logits, np.array([0, 1, 2, 3, 4, 0]))
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)

    def test_gradient_matches_finite_differences(self):
        logits = rng_(33).normal(size=(3, 4))
        labels = np.array([1, 3, 0])
        _, grad = softmax_cross_entropy(logits, labels)

        def loss():
            return softmax_cross_entropy(logits, labels)[0]

        for i in range(3):
            for j in range(4):
                numeric = central_difference(loss, logits, (i, j))
                assert relative_error(float(grad[i, j]), numeric) < 1e-6

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.zeros((2, 3)), np.array([0, 3]))

    def test_float32_logits_keep_float32_gradient(self):
        _, grad = softmax_cross_entropy(np.zeros((2, 3), dtype=np.float32), np.array([0, 1]))
        assert grad.dtype == np.float32


class TestModelContainer:
    def test_forward_shape_all_backbones(self):
        x = rng_(34).normal(size=(2, 1, 1024))
        for name in BACKBONES:
            model = build_backbone(name, n_classes=5, seed=0)
            assert model.forward(x).shape == (2, 5), name

    def test_seeded_weights_reproducible(self):
        a = build_backbone("paper-cnn", 5, seed=1)
        b = build_backbone("paper-cnn", 5, seed=1)
        c = build_backbone("paper-cnn", 5, seed=2)
        for pa, pb in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(pa, pb)
        assert any(not np.array_equal(pa, pc)
                   for pa, pc in zip(a.parameters(), c.parameters()))

    def test_micro_model_end_to_end_gradients(self):
        rng = rng_(35)
        layers = [
            Conv1d(1, 3, 5, rng),
            BatchNorm1d(3),
            ReLU(),
            MaxPool(2),
            Conv1d(3, 4, 3, rng),
            ReLU(),
            AdaptiveAvgPool(2),
            Flatten(),
            Dense(8, 5, rng),
        ]
        model = Model(layers, mode="backbone-only", backbone="micro", n_classes=5)
        x = rng.normal(size=(4, 1, 32))
        y = np.array([0, 2, 4, 1])
        check_model_gradients(model, x, y, rel_tol=1e-4,
                              max_entries_per_param=10, rng=rng_(36))

    def test_front_layer_model_gradients(self):
        rng = rng_(37)
        front = TFconvLayer(init_params(KernelFamily.STTF, 2))
        layers = [front, Conv1d(2, 3, 3, rng), ReLU(), AdaptiveAvgPool(2),
                  Flatten(), Dense(6, 4, rng)]
        model = Model(layers, mode="tfn-add", backbone="micro", n_classes=4)
        x = rng.normal(size=(3, 1, 40))
        y = np.array([0, 1, 3])
        check_model_gradients(model, x, y, rel_tol=1e-4,
                              max_entries_per_param=8, rng=rng_(38))

    def test_n_parameters_counts_everything(self):
        model = build_backbone("lenet-1d", 5)
        want = sum(p.size for p in model.parameters())
        assert model.n_parameters() == want > 0


class TestAssembly:
    def test_mode_catalog(self):
        assert MODES == ("backbone-only", "tfn-add", "tfn-replace",
                         "wkn-add", "wkn-replace", "random-tfn")
        assert BACKBONES == ("paper-cnn", "lenet-1d", "resnet-1d")

    def test_add_mode_prepends_front_layer(self):
        model = assemble_model("tfn-add", n_channels=8, seed=0)
        assert isinstance(model.layers[0], TFconvLayer)
        assert model.layers[0].modulus
        assert isinstance(model.layers[1], Conv1d)
        assert model.layers[1].in_channels == 8

    def test_replace_mode_swaps_first_conv_keeps_bn(self):
        model = assemble_model("tfn-replace", n_channels=8, seed=0)
        assert isinstance(model.layers[0], TFconvLayer)
        assert isinstance(model.layers[1], BatchNorm1d)
        assert model.layers[1].channels == 8
        convs = [l for l in model.layers if isinstance(l, Conv1d)]
        assert convs[0].kernel_size == 3  # the 15-tap stem conv is gone

    def test_backbone_only_has_no_front_layer(self):
        model = assemble_model("backbone-only")
        assert model.tfconv is None
        assert isinstance(model.first_filter_layer(), Conv1d)

    def test_wkn_modes_drop_modulus(self):
        for mode in ("wkn-add", "wkn-replace"):
            model = assemble_model(mode, family="morlet", n_channels=4)
            assert model.tfconv is not None and not model.tfconv.modulus

    def test_random_mode_forces_random_family(self):
        model = assemble_model("random-tfn", family="sttf", n_channels=4)
        assert model.tfconv.kernel_params.family is KernelFamily.RANDOM

    def test_random_family_outside_random_mode_rejected(self):
        with pytest.raises(ValueError):
            assemble_model("tfn-add", family="random")

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            assemble_model("tfn-prepend")

    def test_theta_override(self):
        theta = np.full((4, 1), 0.125)
        model = assemble_model("tfn-add", n_channels=4, theta=theta)
        np.testing.assert_array_equal(model.tfconv.kernel_params.theta, theta)

    def test_all_front_modes_run_forward(self):
        x = rng_(39).normal(size=(2, 1, 1024))
        for mode in MODES:
            model = assemble_model(mode, n_channels=4, seed=0)
            out = model.forward(x)
            assert out.shape == (2, 5), mode
            assert np.all(np.isfinite(out)), mode

    def test_float32_assembly(self):
        model = assemble_model("tfn-add", n_channels=4, dtype=np.float32)
        x = rng_(40).normal(size=(2, 1, 256)).astype(np.float32)
        assert model.forward(x).dtype == np.float32
        # kernel control parameters stay float64 regardless
        assert model.tfconv.kernel_params.theta.dtype == np.float64

    def test_trace_shapes_names_layers(self):
        model = assemble_model("tfn-add", n_channels=8)
        trace = model.trace_shapes(np.zeros((1, 1, 1024)))
        assert trace[0][0].endswith("tfconvlayer")
        assert trace[0][1] == (1, 8, 1024)
        assert trace[-1][1] == (1, 5)
