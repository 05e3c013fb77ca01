import math

import numpy as np
import pytest

from skelbyol.byol import (
    BYOLPretrainer,
    byol_forward,
    byol_loss,
    embedding_std,
    lambda_schedule,
    lr_schedule,
    symmetric_loss,
)
from skelbyol.errors import ConfigError, NumericalError
from skelbyol.graphs import humanoid15
from skelbyol.nn.network import (
    ArchDescriptor,
    BlockSpec,
    BNProbe,
    build_byol_params,
    scale_arch,
    wrap_trainable,
)
from skelbyol.nn.tensor import Tensor
from skelbyol.synthetic import generate_synthetic_dataset

TINY_ARCH = ArchDescriptor(
    blocks=(BlockSpec(4, 3, 2, residual=False), BlockSpec(8, 3, 1)),
    in_channels=6, hidden_dim=8, projection_dim=4,
)


def tiny_trainer(**kw):
    defaults = dict(epochs=2, warmup_epochs=1, batch_size=8, frames=12,
                    seed=0, arch=TINY_ARCH, base_lr=0.05)
    defaults.update(kw)
    return BYOLPretrainer(**defaults)


def tiny_dataset(samples_per_class=8, views=2):
    return generate_synthetic_dataset(2, samples_per_class, views, 16, seed=1)


class TestByolLoss:
    def test_identical_rows_zero(self):
        p = np.random.default_rng(0).normal(size=(5, 8))
        assert byol_loss(Tensor(p), Tensor(p.copy())).item() < 1e-12

    def test_orthogonal_rows_two(self):
        p = np.array([[1.0, 0.0], [0.0, 2.0]])
        z = np.array([[0.0, 3.0], [1.0, 0.0]])
        assert np.isclose(byol_loss(Tensor(p), Tensor(z)).item(), 2.0, atol=1e-12)

    def test_antiparallel_rows_four(self):
        p = np.array([[1.0, 1.0]])
        z = -3.0 * p
        assert np.isclose(byol_loss(Tensor(p), Tensor(z)).item(), 4.0, atol=1e-12)

    def test_equals_two_minus_two_cosine(self):
        rng = np.random.default_rng(1)
        p = rng.normal(size=(16, 8))
        z = rng.normal(size=(16, 8))
        cos = np.sum(
            p / np.linalg.norm(p, axis=1, keepdims=True)
            * (z / np.linalg.norm(z, axis=1, keepdims=True)),
            axis=1,
        )
        expected = float(np.mean(2.0 - 2.0 * cos))
        assert np.isclose(byol_loss(Tensor(p), Tensor(z)).item(), expected, atol=1e-9)

    def test_invariant_to_positive_row_rescaling(self):
        rng = np.random.default_rng(2)
        p = rng.normal(size=(6, 5))
        z = rng.normal(size=(6, 5))
        base = byol_loss(Tensor(p), Tensor(z)).item()
        scales = rng.uniform(0.1, 10.0, size=(6, 1))
        scaled = byol_loss(Tensor(p * scales), Tensor(z)).item()
        assert np.isclose(base, scaled, atol=1e-6)

    def test_range_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            p = rng.normal(size=(4, 6))
            z = rng.normal(size=(4, 6))
            val = byol_loss(Tensor(p), Tensor(z)).item()
            assert 0.0 <= val <= 4.0

    def test_zero_row_rejected(self):
        with pytest.raises(NumericalError):
            byol_loss(Tensor(np.zeros((2, 3))), Tensor(np.ones((2, 3))))

    def test_no_gradient_into_constant_target(self):
        p = Tensor(np.random.default_rng(4).normal(size=(3, 4)), requires_grad=True)
        z = Tensor(np.random.default_rng(5).normal(size=(3, 4)))
        byol_loss(p, z).backward()
        assert p.grad is not None
        assert z.grad is None


class TestSchedules:
    def test_lambda_endpoints_and_midpoint(self):
        assert lambda_schedule(0, 100, 0.99) == pytest.approx(0.99, abs=1e-12)
        assert lambda_schedule(100, 100, 0.99) == pytest.approx(1.0, abs=1e-12)
        assert lambda_schedule(50, 100, 0.99) == pytest.approx(0.995, abs=1e-12)

    def test_lambda_matches_closed_form_everywhere(self):
        total, base = 37, 0.9
        for step in range(total + 1):
            expected = 1 - (1 - base) * (math.cos(math.pi * step / total) + 1) / 2
            assert abs(lambda_schedule(step, total, base) - expected) < 1e-12

    def test_lambda_monotone(self):
        vals = [lambda_schedule(s, 50, 0.99) for s in range(51)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_lambda_step_out_of_range(self):
        with pytest.raises(ConfigError):
            lambda_schedule(11, 10, 0.99)

    def test_lr_endpoints(self):
        assert lr_schedule(0, 100, 10, 0.2) == pytest.approx(1e-6, abs=1e-15)
        assert lr_schedule(10, 100, 10, 0.2) == pytest.approx(0.2, abs=1e-12)
        assert lr_schedule(100, 100, 10, 0.2) == pytest.approx(0.0, abs=1e-12)

    def test_lr_warmup_linear_and_cosine_tail(self):
        total, warm, base = 40, 8, 0.3
        for step in range(warm):
            expected = 1e-6 + (base - 1e-6) * step / warm
            assert abs(lr_schedule(step, total, warm, base) - expected) < 1e-12
        for step in range(warm, total + 1):
            u = (step - warm) / (total - warm)
            expected = base * (math.cos(math.pi * u) + 1) / 2
            assert abs(lr_schedule(step, total, warm, base) - expected) < 1e-12

    def test_lr_midpoint_closed_form(self):
        assert lr_schedule(55, 100, 10, 0.2) == pytest.approx(
            0.2 * (math.cos(math.pi * 0.5) + 1) / 2, abs=1e-12)

    def test_warmup_must_be_shorter(self):
        with pytest.raises(ConfigError):
            lr_schedule(0, 10, 10, 0.2)


class TestForwardStructure:
    def _setup(self):
        online, target = build_byol_params(TINY_ARCH, 1.0, seed=0, dtype=np.float64)
        sc = scale_arch(TINY_ARCH, 1.0)
        adjacency = humanoid15().adjacency_norm
        rng = np.random.default_rng(0)
        x1 = Tensor(rng.normal(size=(4, 12, 15, 6)))
        x2 = Tensor(rng.normal(size=(4, 12, 15, 6)))
        return online, target, sc, adjacency, x1, x2

    def test_no_gradient_reaches_target(self):
        online, target, sc, adjacency, x1, x2 = self._setup()
        wrapped = wrap_trainable(online, requires_grad=True)
        wrapped_t = wrap_trainable(target, requires_grad=False)
        trace = byol_forward(wrapped, online, wrapped_t, target, sc, adjacency, x1, x2, {})
        symmetric_loss(trace).backward()
        online_grads = {n for n, t in wrapped.items() if t.grad is not None}
        target_grads = {n for n, t in wrapped_t.items() if t.grad is not None}
        assert not target_grads
        assert any(n.startswith("encoder.") for n in online_grads)
        assert any(n.startswith("predictor.") for n in online_grads)

    def test_target_bn_runs_eval_mode_only(self):
        online, target, sc, adjacency, x1, x2 = self._setup()
        online_probe, target_probe = BNProbe(), BNProbe()
        wrapped = wrap_trainable(online, requires_grad=True)
        wrapped_t = wrap_trainable(target, requires_grad=False)
        byol_forward(wrapped, online, wrapped_t, target, sc, adjacency, x1, x2, {},
                     online_probe, target_probe)
        assert target_probe.calls
        assert all(mode == "eval" for _, mode in target_probe.calls)
        assert all(mode == "train" for _, mode in online_probe.calls)

    def test_symmetric_loss_is_sum_of_two_terms(self):
        online, target, sc, adjacency, x1, x2 = self._setup()
        wrapped = wrap_trainable(online, requires_grad=False)
        wrapped_t = wrap_trainable(target, requires_grad=False)
        trace = byol_forward(wrapped, online, wrapped_t, target, sc, adjacency, x1, x2)
        total = symmetric_loss(trace).item()
        part1 = byol_loss(trace.p1, trace.target_z2).item()
        part2 = byol_loss(trace.p2, trace.target_z1).item()
        assert np.isclose(total, part1 + part2, atol=1e-12)
        assert 0.0 <= total <= 8.0

    def test_swapping_views_keeps_loss_value(self):
        online, target, sc, adjacency, x1, x2 = self._setup()
        wrapped = wrap_trainable(online, requires_grad=False)
        wrapped_t = wrap_trainable(target, requires_grad=False)
        t_a = byol_forward(wrapped, online, wrapped_t, target, sc, adjacency, x1, x2)
        t_b = byol_forward(wrapped, online, wrapped_t, target, sc, adjacency, x2, x1)
        assert np.isclose(symmetric_loss(t_a).item(), symmetric_loss(t_b).item(), atol=1e-9)


class TestEmbeddingStd:
    def test_spread_rows_near_one(self):
        z = np.random.default_rng(0).normal(size=(256, 16))
        assert 0.8 < embedding_std(z) < 1.2

    def test_collapsed_rows_near_zero(self):
        z = np.tile(np.random.default_rng(1).normal(size=(1, 16)), (64, 1))
        assert embedding_std(z) < 1e-6


class TestTrainer:
    def test_zero_lr_keeps_online_bits(self):
        ds = tiny_dataset()
        tr = tiny_trainer(base_lr=0.0, start_lr=0.0, weight_decay=0.0)
        tr.fit(ds)
        fresh, _ = build_byol_params(TINY_ARCH, 1.0, seed=0, dtype=np.float32)
        for name, arr in tr.online_.tensors.items():
            assert arr.tobytes() == fresh.tensors[name].tobytes()

    def test_lambda_one_alpha_one_freezes_target(self):
        ds = tiny_dataset()
        tr = tiny_trainer(lambda_base=1.0, bn_alpha=1.0)
        tr.fit(ds)
        _, fresh_target = build_byol_params(TINY_ARCH, 1.0, seed=0, dtype=np.float32)
        for name, arr in tr.target_.tensors.items():
            assert arr.tobytes() == fresh_target.tensors[name].tobytes()
        for name, stats in tr.target_.bn.items():
            assert stats.mu.tobytes() == fresh_target.bn[name].mu.tobytes()
            assert stats.sigma2.tobytes() == fresh_target.bn[name].sigma2.tobytes()

    def test_deterministic_checkpoints(self):
        ds = tiny_dataset()
        a = tiny_trainer().fit(ds)
        b = tiny_trainer().fit(ds)
        for name, arr in a.online_.trainable_items():
            assert arr.tobytes() == dict(b.online_.trainable_items())[name].tobytes()
        assert a.metrics_ == b.metrics_ or all(
            {k: v for k, v in ma.items() if k != "wall_ms"}
            == {k: v for k, v in mb.items() if k != "wall_ms"}
            for ma, mb in zip(a.metrics_, b.metrics_)
        )

    def test_metrics_schema(self):
        tr = tiny_trainer().fit(tiny_dataset())
        assert len(tr.metrics_) == tr.epochs
        for record in tr.metrics_:
            assert set(record) == {"epoch", "loss", "embed_std", "lr", "lambda", "wall_ms"}
            assert math.isfinite(record["loss"])

    def test_transform_shape_and_determinism(self):
        ds = tiny_dataset()
        tr = tiny_trainer().fit(ds)
        emb1 = tr.transform(ds)
        emb2 = tr.transform(ds)
        assert emb1.shape == (len(ds.sequences), 8)
        assert emb1.tobytes() == emb2.tobytes()

    def test_mvs_off_runs(self):
        tr = tiny_trainer(mvs_enabled=False).fit(tiny_dataset())
        assert tr.step_ == tr.epochs * 4  # 32 sequences / batch 8

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigError):
            tiny_trainer(warmup_epochs=2, epochs=2).fit(tiny_dataset())
        with pytest.raises(ConfigError):
            tiny_trainer(lambda_base=1.5).fit(tiny_dataset())

    def test_get_params_round_trip(self):
        tr = tiny_trainer()
        params = tr.get_params()
        assert params["batch_size"] == 8
        clone = BYOLPretrainer(**params)
        assert clone.get_params() == params
