import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mosnet.nn import (BLSTM, Adam, Context, Conv2D, Dense, Dropout, MeanPoolTime, Parameter,
                       ReLU, Sequential, Sigmoid, Softmax, TimeMask, adam_step, conv2d, dropout,
                       grad_check, mean_pool_time, relative_error, relu)
from mosnet.nn.layers import sigmoid


def naive_conv(x, kernel, bias, st_, sf):
    """Six nested loops over output position, kernel tap and channels."""
    T, F, C = x.shape
    kt, kf, _, Co = kernel.shape
    To, Fo = -(-T // st_), -(-F // sf)
    pt = max((To - 1) * st_ + kt - T, 0) // 2
    pf = max((Fo - 1) * sf + kf - F, 0) // 2
    out = np.zeros((To, Fo, Co))
    for t in range(To):
        for f in range(Fo):
            for i in range(kt):
                for j in range(kf):
                    ti, fj = t * st_ + i - pt, f * sf + j - pf
                    if not (0 <= ti < T and 0 <= fj < F):
                        continue
                    for c in range(C):
                        for o in range(Co):
                            out[t, f, o] += x[ti, fj, c] * kernel[i, j, c, o]
    return out + bias


def naive_lstm(x, Wx, Wh, b):
    """Step-by-step recurrence, gate order i, f, g, o."""
    H = Wh.shape[0]
    h, c = np.zeros(H), np.zeros(H)
    out = []
    for xt in x:
        z = xt @ Wx + h @ Wh + b
        i = 1 / (1 + np.exp(-z[:H]))
        f = 1 / (1 + np.exp(-z[H:2 * H]))
        g = np.tanh(z[2 * H:3 * H])
        o = 1 / (1 + np.exp(-z[3 * H:]))
        c = f * c + i * g
        h = o * np.tanh(c)
        out.append(h)
    return np.array(out)


class TestConv2D:
    def test_identity_kernel(self):
        x = np.random.default_rng(0).standard_normal((6, 5, 3))
        k = np.zeros((3, 3, 3, 3))
        k[1, 1] = np.eye(3)
        np.testing.assert_array_equal(conv2d(x, k), x)

    def test_zero_input_gives_bias(self):
        k = np.random.default_rng(1).standard_normal((3, 3, 2, 4))
        out = conv2d(np.zeros((5, 7, 2)), k, bias=np.arange(4.0))
        np.testing.assert_array_equal(out, np.broadcast_to(np.arange(4.0), out.shape))

    @pytest.mark.parametrize("strides", [(1, 1), (1, 3), (2, 3), (3, 2)])
    def test_matches_naive_loops(self, strides):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((5, 7, 2))
        k = rng.standard_normal((3, 3, 2, 4))
        b = rng.standard_normal(4)
        np.testing.assert_allclose(conv2d(x, k, b, *strides), naive_conv(x, k, b, *strides),
                                   atol=1e-12, rtol=0)

    @given(st.integers(1, 40), st.integers(1, 20), st.integers(1, 3))
    @settings(max_examples=40, deadline=None)
    def test_output_extent(self, T, F, sf):
        layer = Conv2D(1, 2, 1, sf, dtype=np.float64)
        out = layer.forward(np.ones((1, 1, T, F)))
        assert out.shape == (1, 2, T, -(-F // sf))

    def test_channel_mismatch(self):
        with pytest.raises(ValueError):
            conv2d(np.zeros((4, 4, 3)), np.zeros((3, 3, 2, 1)))

    def test_chunked_path_matches(self):
        rng = np.random.default_rng(3)
        layer = Conv2D(2, 3, 1, 3, rng=rng, dtype=np.float64)
        x = rng.standard_normal((5, 2, 9, 11))
        g = rng.standard_normal((5, 3, 9, 4))
        ref = copy.deepcopy(layer)
        y_ref = ref.forward(x)
        dx_ref = ref.backward(g)
        layer.chunk_bytes = 1
        layer.cache_bytes = 1
        np.testing.assert_allclose(layer.forward(x), y_ref, atol=1e-12)
        np.testing.assert_allclose(layer.backward(g), dx_ref, atol=1e-12)
        np.testing.assert_allclose(layer.W.grad, ref.W.grad, atol=1e-12)


class TestBLSTM:
    def test_matches_unrolled_recurrence(self):
        rng = np.random.default_rng(4)
        layer = BLSTM(3, 2, rng=rng, dtype=np.float64)
        for p in layer.parameters().values():
            p.value = rng.standard_normal(p.value.shape)
        x = rng.standard_normal((4, 3))
        out = layer.forward(x[None], Context.full(1, 4))[0]
        fw = naive_lstm(x, layer.fw.Wx.value, layer.fw.Wh.value, layer.fw.b.value)
        bw = naive_lstm(x[::-1], layer.bw.Wx.value, layer.bw.Wh.value, layer.bw.b.value)[::-1]
        np.testing.assert_allclose(out, np.concatenate([fw, bw], axis=1), atol=1e-12, rtol=0)

    def test_single_frame_shared_weights_symmetric(self):
        rng = np.random.default_rng(5)
        layer = BLSTM(4, 3, rng=rng, dtype=np.float64)
        for name in ("Wx", "Wh", "b"):
            getattr(layer.bw, name).value = getattr(layer.fw, name).value.copy()
        out = layer.forward(rng.standard_normal((1, 1, 4)), Context.full(1, 1))[0, 0]
        np.testing.assert_array_equal(out[:3], out[3:])

    def test_zero_weights_zero_output(self):
        layer = BLSTM(3, 4, dtype=np.float64)
        for p in layer.parameters().values():
            p.value = np.zeros_like(p.value)
        out = layer.forward(np.random.default_rng(6).standard_normal((2, 5, 3)), Context.full(2, 5))
        assert np.all(out == 0)

    def test_forget_bias(self):
        layer = BLSTM(3, 4)
        b = layer.fw.b.value
        assert np.all(b[4:8] == 1.0) and np.all(b[:4] == 0) and np.all(b[8:] == 0)

    def test_padding_does_not_reach_valid_frames(self):
        rng = np.random.default_rng(7)
        layer = BLSTM(3, 4, rng=rng, dtype=np.float64)
        x = rng.standard_normal((1, 6, 3))
        short = layer.forward(x, Context(np.array([6])))
        padded = np.concatenate([x, rng.standard_normal((1, 9, 3))], axis=1)
        long = layer.forward(padded, Context(np.array([6])))
        np.testing.assert_allclose(long[:, :6], short, atol=1e-14)


class TestDenseActivations:
    def test_identity_weights(self):
        layer = Dense(4, 4, dtype=np.float64)
        layer.W.value = np.eye(4)
        x = np.random.default_rng(8).standard_normal((3, 4))
        np.testing.assert_array_equal(layer.forward(x), x)

    def test_zero_input_gives_bias(self):
        layer = Dense(3, 2, dtype=np.float64)
        layer.b.value = np.array([1.5, -2.0])
        np.testing.assert_array_equal(layer.forward(np.zeros((4, 3))), np.tile([1.5, -2.0], (4, 1)))

    def test_matches_naive_matmul(self):
        rng = np.random.default_rng(9)
        layer = Dense(5, 3, rng=rng, dtype=np.float64)
        x = rng.standard_normal((4, 5))
        ref = np.array([[sum(x[n, i] * layer.W.value[i, o] for i in range(5)) + layer.b.value[o]
                         for o in range(3)] for n in range(4)])
        np.testing.assert_allclose(layer.forward(x), ref, atol=1e-12)

    def test_relu(self):
        x = np.array([0.5, 2.0, 7.0])
        np.testing.assert_array_equal(relu(-x), 0)
        np.testing.assert_array_equal(relu(x), x)

    def test_sigmoid_extremes_finite(self):
        y = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        np.testing.assert_allclose(y, [0.0, 0.5, 1.0])

    def test_softmax_sums_to_one(self):
        y = Softmax().forward(np.random.default_rng(10).standard_normal((6, 2)) * 50)
        np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)


class TestDropout:
    def test_eval_is_identity(self):
        x = np.random.default_rng(11).standard_normal(100)
        assert dropout(x, 0.3, "eval") is x

    def test_expectation_preserved(self):
        y = dropout(np.ones(10**6), 0.3, "train", np.random.default_rng(12))
        assert 0.99 <= y.mean() <= 1.01
        assert set(np.unique(y)) <= {0.0, 1 / 0.7}

    def test_same_rng_same_mask(self):
        x = np.ones(1000)
        a = dropout(x, 0.3, "train", np.random.default_rng(13))
        b = dropout(x, 0.3, "train", np.random.default_rng(13))
        np.testing.assert_array_equal(a, b)

    def test_train_needs_rng(self):
        with pytest.raises(ValueError):
            dropout(np.ones(3), 0.3, "train")

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            Dropout(1.0)


class TestMeanPool:
    def test_constant(self):
        assert mean_pool_time(np.full(7, 2.5), 7) == 2.5

    def test_simple(self):
        assert mean_pool_time([1, 2, 3], 3) == 2

    def test_padding_excluded(self):
        assert mean_pool_time([1, 2, 3, 9, 9], 3) == 2

    @pytest.mark.parametrize("poison", [np.nan, np.inf, -np.inf, 1e308])
    def test_poisoned_padding(self, poison):
        x = np.array([[1.0, 2.0, 3.0, poison, poison], [4.0, poison, poison, poison, poison]])
        out = MeanPoolTime().forward(x, Context(np.array([3, 1])))
        np.testing.assert_array_equal(out, [2.0, 4.0])

    def test_backward_zero_on_padding(self):
        pool = MeanPoolTime()
        pool.forward(np.ones((1, 5)), Context(np.array([2])))
        np.testing.assert_array_equal(pool.backward(np.ones(1)), [[0.5, 0.5, 0, 0, 0]])

    @pytest.mark.parametrize("bad", [0, 6])
    def test_valid_len_range(self, bad):
        with pytest.raises(ValueError):
            mean_pool_time([1, 2, 3, 4, 5], bad)

    def test_time_mask_zeroes_padding(self):
        x = np.ones((2, 3, 4, 5))
        out = TimeMask(time_axis=2).forward(x, Context(np.array([4, 2])))
        assert out[0].sum() == 60 and out[1, :, 2:].sum() == 0


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = Parameter(np.array([1.0, -2.0, 3.0]))
        for _ in range(10):
            adam_step([p])
        np.testing.assert_array_equal(p.value, [1.0, -2.0, 3.0])

    def test_first_step_magnitude(self):
        lr = 1e-4
        p = Parameter(np.array([0.3, 0.3, 0.3]))
        p.grad[:] = [5.0, -1e-3, 1e-6]
        adam_step([p], lr=lr)
        delta = p.value - 0.3
        # bias-corrected first step is lr * g / (|g| + eps)
        expected = -lr * np.array([5.0, -1e-3, 1e-6]) / (np.abs([5.0, -1e-3, 1e-6]) + 1e-8)
        np.testing.assert_allclose(delta, expected, rtol=1e-9)
        assert np.all(np.abs(delta) <= lr * (1 + 1e-8))

    def test_quadratic_bowl(self):
        p = Parameter(np.array([1.0]))
        opt = Adam([p], lr=1e-3)
        for _ in range(5000):
            p.grad[:] = 2 * p.value
            opt.step()
        assert abs(p.value[0]) < 0.5

    def test_quadratic_bowl_step_bound(self):
        # each step moves at most about lr, so 5000 steps at 1e-4 cannot pass 0.5
        p = Parameter(np.array([1.0]))
        opt = Adam([p], lr=1e-4)
        for _ in range(5000):
            p.grad[:] = 2 * p.value
            opt.step()
        assert 0.5 - 1e-9 <= p.value[0] < 0.6

    def test_grad_zeroed_after_step(self):
        p = Parameter(np.ones(2))
        p.grad[:] = 1.0
        adam_step([p])
        assert np.all(p.grad == 0)


class TestGradCheck:
    def test_fc(self):
        layer = Dense(3, 4, rng=np.random.default_rng(14))
        assert grad_check(layer, np.random.default_rng(15).standard_normal((2, 3))) < 1e-4

    @pytest.mark.parametrize("strides", [(1, 1), (1, 3)])
    def test_conv(self, strides):
        layer = Conv2D(2, 4, *strides, rng=np.random.default_rng(16))
        assert grad_check(layer, np.random.default_rng(17).standard_normal((1, 2, 5, 7))) < 1e-4

    def test_blstm_with_lengths(self):
        layer = BLSTM(3, 2, rng=np.random.default_rng(18))
        x = np.random.default_rng(19).standard_normal((2, 5, 3))
        assert grad_check(layer, x, lengths=np.array([5, 3])) < 1e-4

    def test_dropout_train_mode(self):
        layer = Sequential([Dense(4, 6, rng=np.random.default_rng(20)), Dropout(0.3)])
        x = np.random.default_rng(21).standard_normal((3, 4))
        assert grad_check(layer, x, mode="train") < 1e-4

    def test_sigmoid_softmax(self):
        x = np.random.default_rng(22).standard_normal((3, 2))
        assert grad_check(Sigmoid(), x) < 1e-4
        assert grad_check(Softmax(), x) < 1e-4

    def test_relu_away_from_kink(self):
        x = np.random.default_rng(23).uniform(0.1, 1.0, (3, 4)) * np.array([1, -1, 1, -1])
        assert grad_check(ReLU(), x) < 1e-4

    def test_relative_error_definition(self):
        assert relative_error(np.array([1.0]), np.array([1.0])) == 0
        assert relative_error(np.array([2.0]), np.array([1.0])) == 0.5
        assert relative_error(np.array([0.0]), np.array([0.0])) == 0

    def test_detects_wrong_gradient(self):
        class Broken(Dense):
            def backward(self, grad):
                return 2 * super().backward(grad)

        layer = Broken(3, 2, rng=np.random.default_rng(24))
        assert grad_check(layer, np.ones((1, 3))) > 0.1


class TestDeterminism:
    def test_forward_repeatable(self):
        layer = Sequential([Dense(4, 5, rng=np.random.default_rng(25)), Dropout(0.3)])
        x = np.ones((2, 4), dtype=np.float32)
        a = layer.forward(x, Context.full(2, 1, mode="train", rng=np.random.default_rng(1)))
        b = layer.forward(x, Context.full(2, 1, mode="train", rng=np.random.default_rng(1)))
        np.testing.assert_array_equal(a, b)
