import math

import numpy as np
import pytest

from fefakit.gradcheck import LAYER_CHECKS, LAYER_TOL, numerical_gradient, relative_error
from fefakit.nn import (
    AdamState, CyclicalLrSchedule, ModelSpec, NonFiniteGradientError, SEBlock, adam_step,
    build_model, cyclical_lr, insert_fefa, softmax_cross_entropy,
)
from fefakit.nn import functional as fn


class TestConv:
    def test_identity_kernel(self):
        x = np.random.default_rng(0).standard_normal((2, 1, 5, 6))
        k = np.zeros((1, 1, 3, 3))
        k[0, 0, 1, 1] = 1.0
        out, _ = fn.conv2d_forward(x, k, np.zeros(1))
        np.testing.assert_array_equal(out, x)

    def test_ones_kernel_with_border(self):
        out, _ = fn.conv2d_forward(np.ones((1, 1, 4, 5)), np.ones((1, 1, 3, 3)), np.zeros(1))
        expected = np.full((4, 5), 9.0)
        expected[[0, -1], :] = 6.0
        expected[:, [0, -1]] = 6.0
        expected[[0, 0, -1, -1], [0, -1, 0, -1]] = 4.0
        np.testing.assert_array_equal(out[0, 0], expected)

    def test_bruteforce_strided(self):
        rng = np.random.default_rng(1)
        x, w, b = rng.standard_normal((2, 3, 5, 7)), rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)
        out, _ = fn.conv2d_forward(x, w, b, stride=2)
        assert out.shape == (2, 4, 3, 4)
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        for n in range(2):
            for o in range(4):
                for i in range(3):
                    for j in range(4):
                        patch = xp[n, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3]
                        assert out[n, o, i, j] == pytest.approx(np.sum(patch * w[o]) + b[o], abs=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(ValueError):
            fn.conv2d_forward(np.ones((1, 2, 4, 4)), np.ones((1, 3, 3, 3)), np.zeros(1))

    def test_skipping_input_grad_keeps_param_grads(self):
        rng = np.random.default_rng(2)
        x, w, b = rng.standard_normal((2, 1, 6, 6)), rng.standard_normal((3, 1, 3, 3)), np.zeros(3)
        out, cache = fn.conv2d_forward(x, w, b)
        g = rng.standard_normal(out.shape)
        full = fn.conv2d_backward(g, cache)
        skip = fn.conv2d_backward(g, cache, need_input_grad=False)
        assert skip[0] is None
        np.testing.assert_array_equal(full[1], skip[1])


class TestSimpleLayers:
    def test_relu(self):
        x = np.array([-2.0, -0.0, 0.0, 3.0]).reshape(1, 1, 1, 4)
        np.testing.assert_array_equal(fn.relu_forward(x)[0].ravel(), [0, 0, 0, 3])

    def test_gap_constant(self):
        out, _ = fn.global_avg_pool_forward(np.full((2, 3, 4, 5), 1.75))
        np.testing.assert_array_equal(out, 1.75)

    def test_maxpool_values_and_floor(self):
        x = np.arange(30.0).reshape(1, 1, 5, 6)
        out, _ = fn.maxpool2x2_forward(x)
        np.testing.assert_array_equal(out[0, 0], [[7, 9, 11], [19, 21, 23]])

    def test_maxpool_tie_goes_to_first(self):
        x = np.ones((1, 1, 2, 2))
        out, cache = fn.maxpool2x2_forward(x)
        dx = fn.maxpool2x2_backward(np.ones_like(out), cache)
        np.testing.assert_array_equal(dx[0, 0], [[1, 0], [0, 0]])

    def test_maxpool_too_small(self):
        with pytest.raises(ValueError):
            fn.maxpool2x2_forward(np.ones((1, 1, 1, 4)))

    def test_residual_shape_mismatch(self):
        with pytest.raises(ValueError):
            fn.residual_add_forward(np.ones((1, 1, 2, 2)), np.ones((1, 1, 2, 3)))

    def test_dense(self):
        x, w, b = np.array([[1.0, 2.0]]), np.array([[1.0, 0.0], [2.0, -1.0], [0.5, 0.5]]), np.ones(3)
        np.testing.assert_array_equal(fn.dense_forward(x, w, b)[0], [[2.0, 1.0, 2.5]])


class TestSE:
    def test_zero_w2_halves(self):
        x = np.random.default_rng(3).standard_normal((2, 4, 3, 3))
        out, _ = fn.se_forward(x, np.ones((1, 4)), np.zeros((4, 1)))
        np.testing.assert_allclose(out, x / 2, rtol=1e-15)

    def test_c4_staged_oracle(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((1, 4, 2, 3))
        w1, w2 = rng.standard_normal((1, 4)), rng.standard_normal((4, 1))
        pooled = [x[0, c].mean() for c in range(4)]
        hidden = max(0.0, sum(w1[0, c] * pooled[c] for c in range(4)))
        s = [1 / (1 + math.exp(-w2[c, 0] * hidden)) for c in range(4)]
        expected = np.stack([s[c] * x[0, c] for c in range(4)])
        np.testing.assert_allclose(fn.se_forward(x, w1, w2)[0][0], expected, rtol=1e-13)

    def test_indivisible_channels(self):
        with pytest.raises(ValueError):
            SEBlock(6, 4)

    def test_sigmoid_extremes(self):
        s = fn.sigmoid(np.array([-800.0, 0.0, 800.0]))
        np.testing.assert_array_equal(s, [0.0, 0.5, 1.0])


class TestCrossEntropy:
    def test_uniform(self):
        loss, _ = softmax_cross_entropy(np.zeros((3, 4)), np.array([0, 1, 3]))
        assert loss == pytest.approx(math.log(4), rel=1e-15)

    def test_confident_correct(self):
        loss, _ = softmax_cross_entropy(np.array([[50.0, 0.0, 0.0]]), np.array([0]))
        assert loss < 1e-20

    def test_gradient(self):
        rng = np.random.default_rng(5)
        logits, labels = rng.standard_normal((4, 5)), rng.integers(0, 5, 4)
        _, grad = softmax_cross_entropy(logits, labels)
        num = numerical_gradient(lambda: softmax_cross_entropy(logits, labels)[0], logits)
        assert relative_error(grad, num) <= 1e-6

    def test_bad_label(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.zeros((2, 3)), np.array([0, 3]))


@pytest.mark.parametrize("name", sorted(LAYER_CHECKS))
def test_layer_gradients(name):
    rng = np.random.default_rng(abs(hash(name)) % (1 << 32))
    worst = max(LAYER_CHECKS[name](rng) for _ in range(10))
    assert worst <= LAYER_TOL


GOLDEN_PARAMS = {
    ("vgg_m", "none"): 7208, ("vgg_m", "single"): 73514, ("vgg_m", "multi"): 95242,
    ("resnet_m", "none"): 20632, ("resnet_m", "single"): 86938,
    ("seresnet_m", "none"): 21304, ("seresnet_m", "single"): 87610,
}


class TestModels:
    @pytest.mark.parametrize("key", sorted(GOLDEN_PARAMS))
    def test_golden_param_count(self, key):
        backbone, fefa = key
        assert build_model(ModelSpec(backbone=backbone, fefa=fefa)).n_params() == GOLDEN_PARAMS[key]

    def test_vgg_multi_placements(self):
        model = build_model(ModelSpec(fefa="multi"))
        assert [l.fefa.bins for l in model.fefa_layers()] == [257, 128, 64, 32]

    def test_resnet_multi_placements(self):
        model = build_model(ModelSpec(backbone="resnet_m", fefa="multi"))
        assert [l.fefa.bins for l in model.fefa_layers()] == [257, 129, 65]

    def test_single_placement(self):
        layers = build_model(ModelSpec(fefa="single")).fefa_layers()
        assert len(layers) == 1 and layers[0].fefa.bins == 257

    def test_insert_none_is_noop(self):
        model = build_model(ModelSpec())
        before = [name for name, _ in model.layers]
        insert_fefa(model, "none")
        assert [name for name, _ in model.layers] == before

    def test_same_seed_same_params(self):
        a = build_model(ModelSpec(backbone="seresnet_m", seed=3)).parameters()
        b = build_model(ModelSpec(backbone="seresnet_m", seed=3)).parameters()
        for k in a:
            assert a[k].tobytes() == b[k].tobytes()

    @pytest.mark.parametrize("backbone", ["vgg_m", "resnet_m", "seresnet_m"])
    @pytest.mark.parametrize("mode", ["single", "multi"])
    def test_zero_fefa_identity(self, backbone, mode):
        rng = np.random.default_rng(6)
        base = build_model(ModelSpec(backbone=backbone, input_bins=32, seed=1))
        with_fefa = build_model(ModelSpec(backbone=backbone, fefa=mode, input_bins=32, seed=1))
        x = np.abs(rng.standard_normal((5, 1, 32, 12)))
        np.testing.assert_allclose(with_fefa.forward(x), base.forward(x), rtol=1e-12, atol=1e-12)

    def test_small_step_decreases_loss(self):
        rng = np.random.default_rng(7)
        model = build_model(ModelSpec(fefa="single", input_bins=32, n_classes=4))
        x, y = np.abs(rng.standard_normal((8, 1, 32, 10))), rng.integers(0, 4, 8)
        loss0, grad = softmax_cross_entropy(model.forward(x), y)
        model.backward(grad)
        adam_step(model.parameters(), model.gradients(), AdamState(), 1e-4)
        loss1, _ = softmax_cross_entropy(model.forward(x), y)
        assert loss1 < loss0

    def test_loss_trajectory_deterministic(self):
        def run():
            rng = np.random.default_rng(8)
            model = build_model(ModelSpec(backbone="resnet_m", input_bins=16, n_classes=3))
            x, y = np.abs(rng.standard_normal((4, 1, 16, 6))), rng.integers(0, 3, 4)
            state, losses = AdamState(), []
            for _ in range(3):
                loss, grad = softmax_cross_entropy(model.forward(x), y)
                model.backward(grad)
                adam_step(model.parameters(), model.gradients(), state, 1e-3)
                losses.append(loss)
            return losses
        assert run() == run()

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ModelSpec(n_classes=1)
        with pytest.raises(ValueError):
            ModelSpec(backbone="vgg16")


class TestOptim:
    def test_zero_gradient(self):
        p = {"w": np.array([1.0, -2.0])}
        state = AdamState()
        adam_step(p, {"w": np.zeros(2)}, state, 0.1)
        np.testing.assert_array_equal(p["w"], [1.0, -2.0])
        assert state.step == 1

    def test_first_step_sign(self):
        g = np.array([0.3, -5.0, 1e-3])
        p = {"w": np.zeros(3)}
        adam_step(p, {"w": g}, AdamState(), 0.01)
        # bias-corrected first step is lr * g / (|g| + eps)
        np.testing.assert_allclose(p["w"], -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)
        np.testing.assert_allclose(p["w"], -0.01 * np.sign(g), rtol=1e-5)

    def test_second_equal_step_smaller(self):
        p = {"w": np.zeros(1)}
        state = AdamState()
        adam_step(p, {"w": np.array([1.0])}, state, 0.01)
        p1 = p["w"][0]
        adam_step(p, {"w": np.array([-1.0])}, state, 0.01)
        step2 = p["w"][0] - p1
        # closed form: m_hat = (0.9 * 0.1 - 0.1) / (1 - 0.9^2), v_hat = 1
        m_hat = (0.9 * 0.1 - 0.1) / (1 - 0.9 ** 2)
        np.testing.assert_allclose(step2, -0.01 * m_hat / (1 + 1e-8), rtol=1e-9)
        assert abs(step2) < abs(p1)

    def test_nan_gradient(self):
        with pytest.raises(NonFiniteGradientError):
            adam_step({"w": np.zeros(2)}, {"w": np.array([0.0, np.nan])}, AdamState(), 0.1)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState(), 0.1)

    def test_in_place(self):
        w = np.ones(2)
        adam_step({"w": w}, {"w": np.ones(2)}, AdamState(), 0.1)
        np.testing.assert_allclose(w, 0.9, rtol=1e-7)

    def test_cyclical_points(self):
        s = CyclicalLrSchedule(1e-4, 3e-3, 80)
        assert cyclical_lr(0, s) == 1e-4
        assert cyclical_lr(80, s) == pytest.approx(3e-3, rel=1e-15)
        assert cyclical_lr(160, s) == pytest.approx(1e-4, rel=1e-12)
        assert cyclical_lr(40, s) == pytest.approx((1e-4 + 3e-3) / 2, rel=1e-12)

    def test_cyclical_periodic(self):
        s = CyclicalLrSchedule(0.1, 1.0, 7)
        for t in range(30):
            assert cyclical_lr(t, s) == pytest.approx(cyclical_lr(t + 14, s), rel=1e-12)

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            CyclicalLrSchedule(1e-2, 1e-3, 10)
        with pytest.raises(ValueError):
            cyclical_lr(-1, CyclicalLrSchedule())
