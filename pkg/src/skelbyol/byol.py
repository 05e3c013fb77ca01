"""Bootstrap-your-own-latent training for skeleton sequences.

An online network (encoder, projector, predictor) learns to predict the
projection produced by a slowly moving target network (encoder, projector)
for a different augmented view of the same action. Gradients flow through
the online branch only; the target tracks the online weights by
exponential moving average, and its BN layers normalize with running
statistics tracked from the online network's batch statistics.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .augment import spec_by_name
from .data import Dataset
from .errors import ConfigError, NumericalError
from .nn.layers import l2_normalize, momentum_bn_update
from .nn.network import (
    ArchDescriptor,
    ParamSet,
    ScaledArch,
    desk_arch,
    encoder_forward,
    extract_grads,
    mlp_forward,
    scale_arch,
    wrap_trainable,
)
from .nn.optim import ema_update, sgd_step
from .nn.tensor import Tensor, tmean, tsum
from .preprocess import preprocess_dataset
from .sampling import PairBatch, batches_per_epoch, iter_pair_batches, pair_count, _to_net

# EMA factor for the online network's own running BN statistics (used when
# the encoder is later frozen in eval mode).
ONLINE_BN_ALPHA = 0.9


def byol_loss(p: Tensor, z: Tensor) -> Tensor:
    """Mean squared distance between row-normalized predictions and targets.

    Equals 2 - 2*cosine(p, z) per row; no gradient flows into ``z`` when it
    comes from the target branch (constant tensor).
    """
    diff = l2_normalize(p) - l2_normalize(z)
    return tmean(tsum(diff * diff, axis=1))


@dataclass
class BYOLTrace:
    """Intermediate tensors of one symmetric forward pass."""

    y1: Tensor
    z1: Tensor
    p1: Tensor
    y2: Tensor
    z2: Tensor
    p2: Tensor
    target_z1: Tensor
    target_z2: Tensor


def symmetric_loss(trace: BYOLTrace) -> Tensor:
    """Both branch assignments: predict target(v2) from v1 and vice versa."""
    return byol_loss(trace.p1, trace.target_z2) + byol_loss(trace.p2, trace.target_z1)


def byol_forward(
    wrapped_online: dict,
    online: ParamSet,
    wrapped_target: dict,
    target: ParamSet,
    sc: ScaledArch,
    adjacency: np.ndarray,
    x1: Tensor,
    x2: Tensor,
    collector: dict | None = None,
    online_probe=None,
    target_probe=None,
) -> BYOLTrace:
    """Online branch in train mode, target branch in eval mode (running stats).

    The online views pass separately (each normalizes with its own batch
    statistics); the target views share one concatenated eval pass, which is
    equivalent because eval-mode BN applies per-row constants.
    """
    y1 = encoder_forward(wrapped_online, online, sc, x1, adjacency, "train", collector, online_probe)
    z1 = mlp_forward(wrapped_online, online, "projector", y1, "train", collector, online_probe)
    p1 = mlp_forward(wrapped_online, online, "predictor", z1, "train", collector, online_probe)
    y2 = encoder_forward(wrapped_online, online, sc, x2, adjacency, "train", collector, online_probe)
    z2 = mlp_forward(wrapped_online, online, "projector", y2, "train", collector, online_probe)
    p2 = mlp_forward(wrapped_online, online, "predictor", z2, "train", collector, online_probe)
    b = x1.shape[0]
    xt = Tensor(np.concatenate([x1.data, x2.data], axis=0))
    ty = encoder_forward(wrapped_target, target, sc, xt, adjacency, "eval", None, target_probe)
    tz = mlp_forward(wrapped_target, target, "projector", ty, "eval", None, target_probe)
    tz1 = Tensor(tz.data[:b])
    tz2 = Tensor(tz.data[b:])
    return BYOLTrace(y1, z1, p1, y2, z2, p2, tz1, tz2)


def lambda_schedule(step: int, total_steps: int, lambda_base: float) -> float:
    """Cosine increase from ``lambda_base`` at step 0 to 1 at the last step."""
    if not 0 <= step <= total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    return 1.0 - (1.0 - lambda_base) * (math.cos(math.pi * step / total_steps) + 1.0) / 2.0


def lr_schedule(step: int, total_steps: int, warmup_steps: int, base_lr: float,
                start_lr: float = 1e-6) -> float:
    """Linear warmup from ``start_lr`` to ``base_lr``, then cosine decay to 0."""
    if warmup_steps >= total_steps:
        raise ConfigError("warmup must be shorter than the schedule")
    if warmup_steps > 0 and step < warmup_steps:
        return start_lr + (base_lr - start_lr) * (step / warmup_steps)
    u = (step - warmup_steps) / (total_steps - warmup_steps)
    return base_lr * (math.cos(math.pi * u) + 1.0) / 2.0


def embedding_std(z: np.ndarray) -> float:
    """Collapse diagnostic: sqrt(D)-scaled per-dimension std of normalized rows.

    Near 1.0 for well-spread embeddings, near 0 when all rows coincide.
    """
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    zn = z / np.maximum(norms, 1e-12)
    return float(zn.std(axis=0).mean() * math.sqrt(z.shape[1]))


def _merge_batch_stats(collected: list[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    mus = np.stack([m for m, _ in collected])
    vars_ = np.stack([v for _, v in collected])
    return mus.mean(axis=0), vars_.mean(axis=0)


class BYOLPretrainer(BaseEstimator):
    """Self-supervised pretrainer with a fit/transform interface.

    ``fit`` runs the full training schedule on an unlabeled (or labeled)
    dataset; ``transform`` embeds every sequence with the learned online
    encoder in eval mode. Fully deterministic in ``seed``.
    """

    def __init__(
        self,
        epochs: int = 100,
        batch_size: int = 64,
        base_lr: float = 0.05,
        start_lr: float = 1e-6,
        warmup_epochs: int = 10,
        weight_decay: float = 1e-4,
        sgd_momentum: float = 0.9,
        lambda_base: float = 0.99,
        bn_alpha: float = 0.99,
        seed: int = 0,
        mvs_enabled: bool = True,
        spec1="aggressive",
        spec2="conservative",
        arch: ArchDescriptor | None = None,
        width_multiplier: float = 1.0,
        frames: int = 50,
        center: bool = True,
        rotate: bool = True,
        dtype: str = "float32",
    ):
        self.epochs = epochs
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.start_lr = start_lr
        self.warmup_epochs = warmup_epochs
        self.weight_decay = weight_decay
        self.sgd_momentum = sgd_momentum
        self.lambda_base = lambda_base
        self.bn_alpha = bn_alpha
        self.seed = seed
        self.mvs_enabled = mvs_enabled
        self.spec1 = spec1
        self.spec2 = spec2
        self.arch = arch
        self.width_multiplier = width_multiplier
        self.frames = frames
        self.center = center
        self.rotate = rotate
        self.dtype = dtype

    def _validate(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.epochs > 0 and not self.warmup_epochs < self.epochs:
            raise ConfigError(f"warmup_epochs ({self.warmup_epochs}) must be < epochs ({self.epochs})")
        if not 0.0 <= self.lambda_base <= 1.0:
            raise ConfigError(f"lambda_base must be in [0, 1], got {self.lambda_base}")
        if not 0.0 <= self.bn_alpha <= 1.0:
            raise ConfigError(f"bn_alpha must be in [0, 1], got {self.bn_alpha}")

    def fit(self, dataset: Dataset, y=None):
        self._validate()
        from .nn.network import build_byol_params

        np_dtype = np.dtype(self.dtype).type
        spec1 = spec_by_name(self.spec1)
        spec2 = spec_by_name(self.spec2)
        arch = self.arch if self.arch is not None else desk_arch()
        prepped = preprocess_dataset(dataset, self.frames, self.center, self.rotate)
        adjacency = prepped.graph.adjacency_norm.astype(np_dtype)
        sc = scale_arch(arch, self.width_multiplier)

        online, target = build_byol_params(arch, self.width_multiplier, self.seed, np_dtype)
        buffers: dict[str, np.ndarray] = {}
        n_units = pair_count(prepped, self.mvs_enabled)
        steps_per_epoch = batches_per_epoch(n_units, self.batch_size)
        total_steps = max(1, self.epochs * steps_per_epoch)
        warmup_steps = self.warmup_epochs * steps_per_epoch

        metrics = []
        step = 0
        embed_std = 0.0
        for epoch in range(self.epochs):
            t0 = time.perf_counter()
            losses = []
            for batch in iter_pair_batches(
                prepped, self.batch_size, spec1, spec2, self.seed, epoch,
                self.mvs_enabled, np_dtype,
            ):
                lr = lr_schedule(step, total_steps, warmup_steps, self.base_lr, self.start_lr)
                lam = lambda_schedule(step, total_steps, self.lambda_base)
                loss_val, embed_std = self._train_step(
                    batch, online, target, sc, adjacency, buffers, lr, lam)
                if not math.isfinite(loss_val):
                    raise NumericalError(
                        f"non-finite loss at step {step} (lr={lr:.3g}, lambda={lam:.6f})")
                losses.append(loss_val)
                step += 1
            metrics.append(
                {
                    "epoch": epoch,
                    "loss": float(np.mean(losses)),
                    "embed_std": embed_std,
                    "lr": lr_schedule(step - 1, total_steps, warmup_steps, self.base_lr, self.start_lr),
                    "lambda": lambda_schedule(step - 1, total_steps, self.lambda_base),
                    "wall_ms": (time.perf_counter() - t0) * 1000.0,
                }
            )

        self.online_ = online
        self.target_ = target
        self.arch_ = arch
        self.scaled_arch_ = sc
        self.adjacency_ = adjacency
        self.metrics_ = metrics
        self.step_ = step
        self.graph_ = prepped.graph
        return self

    def _train_step(self, batch: PairBatch, online, target, sc, adjacency, buffers,
                    lr: float, lam: float) -> tuple[float, float]:
        wrapped = wrap_trainable(online, requires_grad=True)
        wrapped_t = wrap_trainable(target, requires_grad=False)
        collector: dict = {}
        x1 = Tensor(batch.view1)
        x2 = Tensor(batch.view2)
        trace = byol_forward(wrapped, online, wrapped_t, target, sc, adjacency, x1, x2, collector)
        loss = symmetric_loss(trace)
        loss.backward()
        grads = extract_grads(wrapped)
        sgd_step(online, grads, lr, self.sgd_momentum, self.weight_decay, buffers)
        ema_update(target, online, lam)
        for name, collected in collector.items():
            # Target stats follow the online batch statistics of both views;
            # the online network's own running stats (only consumed later by
            # frozen eval-mode protocols) track the conservative branch, whose
            # distribution matches downstream inputs.
            mu_b, var_b = _merge_batch_stats(collected)
            mu_cons, var_cons = collected[1] if len(collected) > 1 else collected[0]
            momentum_bn_update(online.bn[name], mu_cons, var_cons, ONLINE_BN_ALPHA)
            if name in target.bn:
                momentum_bn_update(target.bn[name], mu_b, var_b, self.bn_alpha)
        return loss.item(), embedding_std(trace.z1.data)

    def transform(self, dataset: Dataset) -> np.ndarray:
        """Embed every sequence (eval mode, no augmentation): [N, D]."""
        self._check_fitted()
        prepped = preprocess_dataset(dataset, self.frames, self.center, self.rotate)
        return encode_sequences(
            self.online_, self.scaled_arch_, self.adjacency_, prepped.sequences,
            prepped.graph, batch_size=max(self.batch_size, 64),
            dtype=np.dtype(self.dtype).type,
        )

    def fit_transform(self, dataset: Dataset, y=None) -> np.ndarray:
        return self.fit(dataset).transform(dataset)

    def _check_fitted(self):
        if not hasattr(self, "online_"):
            raise ConfigError("pretrainer is not fitted yet")


def encode_sequences(params: ParamSet, sc: ScaledArch, adjacency: np.ndarray, sequences,
                     graph, batch_size: int = 128, dtype=np.float32,
                     probe=None) -> np.ndarray:
    """Eval-mode representations for a list of preprocessed sequences."""
    wrapped = wrap_trainable(params, requires_grad=False)
    outs = []
    for start in range(0, len(sequences), batch_size):
        chunk = sequences[start : start + batch_size]
        x = Tensor(np.stack([_to_net(s, graph, dtype) for s in chunk]))
        y = encoder_forward(wrapped, params, sc, x, adjacency, "eval", None, probe)
        outs.append(y.data)
    return np.concatenate(outs, axis=0)
