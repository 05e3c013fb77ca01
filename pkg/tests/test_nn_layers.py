import numpy as np
import pytest

from skelbyol.errors import DataError, NumericalError
from skelbyol.nn.layers import (
    batch_norm,
    global_avg_pool,
    graph_conv,
    l2_normalize,
    linear,
    momentum_bn_update,
    softmax,
    softmax_cross_entropy,
    temporal_conv,
)
from skelbyol.nn.network import BNStats
from skelbyol.nn.tensor import Tensor, tsum

rng = np.random.default_rng(42)


def const(shape):
    return Tensor(rng.normal(size=shape))


class TestGraphConv:
    def test_identity_adjacency_identity_weights(self):
        x = rng.normal(size=(2, 4, 5, 3))
        out = graph_conv(Tensor(x), Tensor(np.eye(3)), np.eye(5))
        assert np.allclose(out.data, x, atol=1e-12)

    def test_single_joint_reduces_to_channel_map(self):
        x = rng.normal(size=(2, 4, 1, 3))
        w = rng.normal(size=(6, 3))
        out = graph_conv(Tensor(x), Tensor(w), np.ones((1, 1)))
        assert np.allclose(out.data, x @ w.T, atol=1e-12)

    def test_matches_triple_loop_oracle(self):
        b, t, j, c, o = 2, 3, 4, 5, 6
        x = rng.normal(size=(b, t, j, c))
        w = rng.normal(size=(o, c))
        a = rng.normal(size=(j, j))
        out = graph_conv(Tensor(x), Tensor(w), a)
        ref = np.zeros((b, t, j, o))
        for bi in range(b):
            for ti in range(t):
                for ji in range(j):
                    for oi in range(o):
                        acc = 0.0
                        for ci in range(c):
                            for ii in range(j):
                                acc += w[oi, ci] * a[ji, ii] * x[bi, ti, ii, ci]
                        ref[bi, ti, ji, oi] = acc
        assert np.allclose(out.data, ref, atol=1e-6)

    def test_gradients(self, fd_check):
        x = rng.normal(size=(2, 3, 4, 3))
        w = rng.normal(size=(5, 3))
        a = rng.normal(size=(4, 4))
        seed = rng.normal(size=(2, 3, 4, 5))
        fd_check(lambda tx, tw: tsum(graph_conv(tx, tw, a) * Tensor(seed)), [x, w])


class TestTemporalConv:
    def test_k1_identity_kernel(self):
        x = rng.normal(size=(2, 5, 3, 4))
        w = np.stack([np.eye(4)], axis=2)  # [4,4,1]
        out = temporal_conv(Tensor(x), Tensor(w), 1)
        assert np.allclose(out.data, x, atol=1e-12)

    def test_constant_input_sum_normalized_kernel(self):
        x = np.full((1, 9, 2, 3), 2.5)
        w = np.zeros((3, 3, 5))
        for c in range(3):
            w[c, c, :] = 0.2  # sums to 1 per channel
        out = temporal_conv(Tensor(x), Tensor(w), 1)
        interior = out.data[:, 2:-2]
        assert np.allclose(interior, 2.5, atol=1e-6)

    def test_matches_sliding_window_oracle(self):
        b, t, j, c, o, k, s = 2, 7, 3, 4, 5, 5, 2
        x = rng.normal(size=(b, t, j, c))
        w = rng.normal(size=(o, c, k))
        out = temporal_conv(Tensor(x), Tensor(w), s)
        pad = (k - 1) // 2
        t_out = -(-t // s)
        ref = np.zeros((b, t_out, j, o))
        for ti in range(t_out):
            for ki in range(k):
                src = ti * s + ki - pad
                if 0 <= src < t:
                    ref[:, ti] += np.einsum("bjc,oc->bjo", x[:, src], w[:, :, ki])
        assert np.allclose(out.data, ref, atol=1e-6)

    def test_output_length(self):
        x = rng.normal(size=(1, 10, 2, 2))
        w = rng.normal(size=(2, 2, 3))
        for s, expect in [(1, 10), (2, 5), (3, 4), (4, 3)]:
            assert temporal_conv(Tensor(x), Tensor(w), s).shape[1] == expect

    def test_even_kernel_rejected(self):
        with pytest.raises(DataError):
            temporal_conv(Tensor(np.ones((1, 4, 2, 2))), Tensor(np.ones((2, 2, 4))), 1)

    def test_gradients(self, fd_check):
        x = rng.normal(size=(2, 6, 2, 3))
        w = rng.normal(size=(4, 3, 5))
        seed = rng.normal(size=(2, 3, 2, 4))
        fd_check(lambda tx, tw: tsum(temporal_conv(tx, tw, 2) * Tensor(seed)), [x, w])


class TestBatchNorm:
    def _stats(self, c):
        return BNStats(np.zeros(c), np.ones(c), np.ones(c), np.zeros(c))

    def test_train_output_normalized(self):
        x = rng.normal(loc=3.0, scale=2.0, size=(64, 6, 5, 4))
        s = self._stats(4)
        out, mu, var = batch_norm(Tensor(x), Tensor(s.gamma), Tensor(s.beta),
                                  s.mu, s.sigma2, 1e-5, "train")
        m = out.data.mean(axis=(0, 1, 2))
        v = out.data.var(axis=(0, 1, 2))
        assert np.abs(m).max() < 1e-5
        assert np.abs(v - 1).max() < 1e-4
        assert np.allclose(mu, x.mean(axis=(0, 1, 2)))
        assert np.allclose(var, x.var(axis=(0, 1, 2)))

    def test_eval_identity_with_unit_stats(self):
        x = rng.normal(size=(3, 4))
        s = self._stats(4)
        out, _, _ = batch_norm(Tensor(x), Tensor(s.gamma), Tensor(s.beta),
                               s.mu, s.sigma2, 1e-9, "eval")
        assert np.allclose(out.data, x, atol=1e-6)

    def test_eval_matches_closed_form(self):
        x = rng.normal(size=(5, 3))
        mu = np.array([0.5, -1.0, 2.0])
        sigma2 = np.array([4.0, 0.25, 1.0])
        gamma = np.array([2.0, 3.0, -1.0])
        beta = np.array([0.0, 1.0, -2.0])
        eps = 1e-5
        out, _, _ = batch_norm(Tensor(x), Tensor(gamma), Tensor(beta), mu, sigma2, eps, "eval")
        expected = (x - mu) / np.sqrt(sigma2 + eps) * gamma + beta
        assert np.allclose(out.data, expected, atol=1e-6)

    def test_train_batch_of_one_rejected(self):
        s = self._stats(3)
        with pytest.raises(DataError):
            batch_norm(Tensor(np.ones((1, 3))), Tensor(s.gamma), Tensor(s.beta),
                       s.mu, s.sigma2, 1e-5, "train")

    @pytest.mark.parametrize("mode", ["train", "eval"])
    def test_gradients(self, fd_check, mode):
        x = rng.normal(size=(6, 4))
        gamma = rng.uniform(0.5, 1.5, size=4)
        beta = rng.normal(size=4)
        mu = rng.normal(size=4)
        sigma2 = rng.uniform(0.5, 2.0, size=4)
        seed = rng.normal(size=(6, 4))

        def fn(tx, tg, tb):
            out, _, _ = batch_norm(tx, tg, tb, mu, sigma2, 1e-5, mode)
            return tsum(out * Tensor(seed))

        fd_check(fn, [x, gamma, beta])


class TestMomentumBN:
    def test_alpha_one_fixed_point(self):
        s = BNStats(np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.ones(2), np.zeros(2))
        before = (s.mu.copy(), s.sigma2.copy())
        momentum_bn_update(s, np.array([9.0, 9.0]), np.array([9.0, 9.0]), 1.0)
        assert np.array_equal(s.mu, before[0]) and np.array_equal(s.sigma2, before[1])

    def test_alpha_zero_adopts_batch(self):
        s = BNStats(np.array([1.0]), np.array([1.0]), np.ones(1), np.zeros(1))
        momentum_bn_update(s, np.array([5.0]), np.array([7.0]), 0.0)
        assert s.mu[0] == 5.0 and s.sigma2[0] == 7.0

    def test_scalar_arithmetic(self):
        s = BNStats(np.array([1.0]), np.array([1.0]), np.ones(1), np.zeros(1))
        momentum_bn_update(s, np.array([0.0]), np.array([0.0]), 0.99)
        assert np.isclose(s.mu[0], 0.99)

    def test_geometric_convergence_exact(self):
        # with zero batch stats the recurrence is a pure repeated multiply
        alpha = 0.97
        s = BNStats(np.array([1.234]), np.array([0.5]), np.ones(1), np.zeros(1))
        expected = np.array([1.234])
        for _ in range(50):
            momentum_bn_update(s, np.array([0.0]), np.array([0.0]), alpha)
            expected = alpha * expected + (1.0 - alpha) * 0.0
            assert s.mu[0] == expected[0]

    def test_gamma_beta_untouched(self):
        s = BNStats(np.zeros(2), np.ones(2), np.array([1.5, 2.5]), np.array([-1.0, 1.0]))
        momentum_bn_update(s, np.ones(2), np.ones(2), 0.5)
        assert np.array_equal(s.gamma, [1.5, 2.5]) and np.array_equal(s.beta, [-1.0, 1.0])

    def test_alpha_out_of_range(self):
        s = BNStats(np.zeros(1), np.ones(1), np.ones(1), np.zeros(1))
        with pytest.raises(ValueError):
            momentum_bn_update(s, np.ones(1), np.ones(1), 1.5)


class TestLinearPoolNormalize:
    def test_linear_identity(self):
        x = rng.normal(size=(3, 4))
        out = linear(Tensor(x), Tensor(np.eye(4)), Tensor(np.zeros(4)))
        assert np.allclose(out.data, x, atol=1e-12)

    def test_pool_of_constant(self):
        out = global_avg_pool(Tensor(np.full((2, 5, 3, 4), 1.5)))
        assert out.shape == (2, 4)
        assert np.allclose(out.data, 1.5)

    def test_l2_normalize_345(self):
        out = l2_normalize(Tensor(np.array([[3.0, 4.0]])))
        assert np.allclose(out.data, [[0.6, 0.8]], atol=1e-12)

    def test_unit_rows_unchanged_and_scale_invariant(self):
        v = rng.normal(size=(4, 6))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        out = l2_normalize(Tensor(v))
        assert np.allclose(out.data, v, atol=1e-7)
        out10 = l2_normalize(Tensor(10.0 * v))
        assert np.allclose(out10.data, v, atol=1e-7)

    def test_row_norms_unit(self):
        v = rng.normal(size=(8, 5)) * 7.0
        out = l2_normalize(Tensor(v))
        assert np.allclose(np.linalg.norm(out.data, axis=1), 1.0, atol=1e-7)

    def test_zero_row_rejected(self):
        with pytest.raises(NumericalError):
            l2_normalize(Tensor(np.zeros((2, 3))))

    def test_l2_gradients(self, fd_check):
        v = rng.normal(size=(3, 4)) + 0.5
        seed = rng.normal(size=(3, 4))
        fd_check(lambda t: tsum(l2_normalize(t) * Tensor(seed)), [v])


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_hard_target(self):
        logits = np.zeros((3, 4))
        loss = softmax_cross_entropy(Tensor(logits), np.array([0, 1, 3]))
        assert np.isclose(loss.item(), np.log(4.0), atol=1e-12)

    def test_large_margin_drives_loss_to_zero(self):
        logits = np.zeros((2, 3))
        logits[0, 1] = logits[1, 2] = 50.0
        loss = softmax_cross_entropy(Tensor(logits), np.array([1, 2]))
        assert loss.item() < 1e-12

    def test_gradient_closed_form(self):
        logits = rng.normal(size=(5, 6))
        labels = np.array([0, 2, 5, 1, 3])
        t = Tensor(logits.copy(), requires_grad=True)
        softmax_cross_entropy(t, labels).backward()
        onehot = np.zeros((5, 6))
        onehot[np.arange(5), labels] = 1.0
        assert np.allclose(t.grad, (softmax(logits) - onehot) / 5, atol=1e-12)

    def test_gradient_matches_fd(self, fd_check):
        logits = rng.normal(size=(4, 5))
        p = softmax(rng.normal(size=(4, 5)))
        fd_check(lambda t: softmax_cross_entropy(t, p), [logits])

    def test_soft_targets(self):
        p = softmax(rng.normal(size=(3, 4)))
        logits = np.log(p)  # student matches teacher exactly
        loss = softmax_cross_entropy(Tensor(logits), p)
        entropy = -(p * np.log(p)).sum(axis=1).mean()
        assert np.isclose(loss.item(), entropy, atol=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            softmax_cross_entropy(Tensor(np.zeros((2, 3))), np.zeros((3, 3)))

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            softmax_cross_entropy(Tensor(np.zeros((2, 1))), np.array([0, 0]))
