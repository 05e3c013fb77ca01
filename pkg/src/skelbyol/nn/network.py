"""Network definition: parameter containers, the graph/temporal encoder,
and the MLP heads used by the self-supervised trainer and the evaluators.

An encoder block is graph_conv -> BN -> ReLU -> temporal_conv -> BN
(+ optional residual) -> ReLU; blocks are followed by global average
pooling. Projector and predictor are linear -> BN -> ReLU -> linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from .layers import batch_norm, global_avg_pool, graph_conv, linear, relu, temporal_conv
from .tensor import Tensor, einsum


@dataclass
class BNStats:
    """Running statistics plus the learned affine parameters of one BN layer."""

    mu: np.ndarray
    sigma2: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    epsilon: float = 1e-5

    def copy(self) -> "BNStats":
        return BNStats(self.mu.copy(), self.sigma2.copy(), self.gamma.copy(),
                       self.beta.copy(), self.epsilon)


@dataclass
class ParamSet:
    """Named weights and BN layers of one network (online, target, classifier)."""

    tensors: dict[str, np.ndarray]
    bn: dict[str, BNStats]
    width_multiplier: float = 1.0

    def trainable_items(self):
        """All learnable arrays in a stable order, BN affine included."""
        for name, arr in self.tensors.items():
            yield name, arr
        for name, stats in self.bn.items():
            yield f"{name}.gamma", stats.gamma
            yield f"{name}.beta", stats.beta

    def set_trainable(self, name: str, value: np.ndarray) -> None:
        if name in self.tensors:
            self.tensors[name] = value
            return
        base, _, leaf = name.rpartition(".")
        setattr(self.bn[base], leaf, value)

    def copy(self) -> "ParamSet":
        return ParamSet(
            {k: v.copy() for k, v in self.tensors.items()},
            {k: v.copy() for k, v in self.bn.items()},
            self.width_multiplier,
        )

    def subset(self, prefixes: tuple[str, ...]) -> "ParamSet":
        return ParamSet(
            {k: v.copy() for k, v in self.tensors.items() if k.startswith(prefixes)},
            {k: v.copy() for k, v in self.bn.items() if k.startswith(prefixes)},
            self.width_multiplier,
        )


@dataclass(frozen=True)
class BlockSpec:
    out_channels: int
    temporal_kernel: int = 9
    stride: int = 1
    residual: bool = True


@dataclass(frozen=True)
class ArchDescriptor:
    """Unscaled architecture; width multipliers are applied at build time."""

    blocks: tuple[BlockSpec, ...]
    in_channels: int = 6
    hidden_dim: int = 128
    projection_dim: int = 64
    class_count: int | None = None

    def __post_init__(self):
        if not self.blocks:
            raise ConfigError("architecture needs at least one block")
        for blk in self.blocks:
            if blk.out_channels < 1 or blk.stride < 1:
                raise ConfigError("block channels and stride must be positive")
            if blk.temporal_kernel % 2 == 0 or blk.temporal_kernel < 1:
                raise ConfigError("temporal kernel must be odd and positive")
        if self.in_channels < 1 or self.hidden_dim < 1 or self.projection_dim < 1:
            raise ConfigError("channel dimensions must be positive")

    @property
    def representation_dim(self) -> int:
        return self.blocks[-1].out_channels

    def to_dict(self) -> dict:
        return {
            "blocks": [
                {
                    "out_channels": b.out_channels,
                    "temporal_kernel": b.temporal_kernel,
                    "stride": b.stride,
                    "residual": b.residual,
                }
                for b in self.blocks
            ],
            "in_channels": self.in_channels,
            "hidden_dim": self.hidden_dim,
            "projection_dim": self.projection_dim,
            "class_count": self.class_count,
        }

    @staticmethod
    def from_dict(d: dict) -> "ArchDescriptor":
        return ArchDescriptor(
            blocks=tuple(BlockSpec(**b) for b in d["blocks"]),
            in_channels=int(d.get("in_channels", 6)),
            hidden_dim=int(d.get("hidden_dim", 128)),
            projection_dim=int(d.get("projection_dim", 64)),
            class_count=d.get("class_count"),
        )


def desk_arch(in_channels: int = 6, class_count: int | None = None) -> ArchDescriptor:
    """Small default encoder: 3 blocks, kernel 9, two stride-2 stages.

    Sized for minutes-scale CPU training; pass a custom ArchDescriptor for
    deeper stacks.
    """
    return ArchDescriptor(
        blocks=(
            BlockSpec(16, 9, 2, residual=False),
            BlockSpec(32, 9, 2),
            BlockSpec(64, 9, 1),
        ),
        in_channels=in_channels,
        hidden_dim=128,
        projection_dim=64,
        class_count=class_count,
    )


def scale_width(channels: int, width: float) -> int:
    return max(1, int(math.floor(channels * width + 0.5)))


@dataclass(frozen=True)
class ScaledBlock:
    in_channels: int
    out_channels: int
    temporal_kernel: int
    stride: int
    residual: bool


@dataclass(frozen=True)
class ScaledArch:
    blocks: tuple[ScaledBlock, ...]
    in_channels: int
    representation_dim: int
    hidden_dim: int
    projection_dim: int
    class_count: int | None


def scale_arch(arch: ArchDescriptor, width: float) -> ScaledArch:
    if width <= 0:
        raise ConfigError(f"width multiplier must be positive, got {width}")
    blocks = []
    cin = arch.in_channels
    for blk in arch.blocks:
        cout = scale_width(blk.out_channels, width)
        blocks.append(ScaledBlock(cin, cout, blk.temporal_kernel, blk.stride, blk.residual))
        cin = cout
    return ScaledArch(
        blocks=tuple(blocks),
        in_channels=arch.in_channels,
        representation_dim=blocks[-1].out_channels,
        hidden_dim=scale_width(arch.hidden_dim, width),
        projection_dim=arch.projection_dim,
        class_count=arch.class_count,
    )


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _new_bn(channels: int, dtype) -> BNStats:
    return BNStats(
        mu=np.zeros(channels, dtype=dtype),
        sigma2=np.ones(channels, dtype=dtype),
        gamma=np.ones(channels, dtype=dtype),
        beta=np.zeros(channels, dtype=dtype),
    )


def build_encoder(arch: ArchDescriptor, width_multiplier: float = 1.0, seed: int = 0,
                  dtype=np.float32, prefix: str = "encoder") -> ParamSet:
    """Fan-in scaled uniform init, deterministic in the seed."""
    sc = scale_arch(arch, width_multiplier)
    rng = np.random.default_rng([seed, 0xE0C0])
    ps = ParamSet({}, {}, width_multiplier)
    for i, blk in enumerate(sc.blocks):
        base = f"{prefix}.block{i}"
        ps.tensors[f"{base}.gcn.w"] = _uniform(rng, (blk.out_channels, blk.in_channels), blk.in_channels, dtype)
        ps.bn[f"{base}.bn1"] = _new_bn(blk.out_channels, dtype)
        ps.tensors[f"{base}.tcn.w"] = _uniform(
            rng, (blk.out_channels, blk.out_channels, blk.temporal_kernel),
            blk.out_channels * blk.temporal_kernel, dtype)
        ps.bn[f"{base}.bn2"] = _new_bn(blk.out_channels, dtype)
        if blk.residual and (blk.in_channels != blk.out_channels or blk.stride != 1):
            ps.tensors[f"{base}.res.w"] = _uniform(
                rng, (blk.out_channels, blk.in_channels), blk.in_channels, dtype)
            ps.bn[f"{base}.bnres"] = _new_bn(blk.out_channels, dtype)
    return ps


def _build_mlp(ps: ParamSet, rng, prefix: str, d_in: int, d_hidden: int, d_out: int, dtype) -> None:
    ps.tensors[f"{prefix}.fc1.w"] = _uniform(rng, (d_hidden, d_in), d_in, dtype)
    ps.tensors[f"{prefix}.fc1.b"] = np.zeros(d_hidden, dtype=dtype)
    ps.bn[f"{prefix}.bn"] = _new_bn(d_hidden, dtype)
    ps.tensors[f"{prefix}.fc2.w"] = _uniform(rng, (d_out, d_hidden), d_hidden, dtype)
    ps.tensors[f"{prefix}.fc2.b"] = np.zeros(d_out, dtype=dtype)


def build_byol_params(arch: ArchDescriptor, width_multiplier: float = 1.0, seed: int = 0,
                      dtype=np.float32) -> tuple[ParamSet, ParamSet]:
    """Online (encoder+projector+predictor) and its target copy (no predictor)."""
    sc = scale_arch(arch, width_multiplier)
    online = build_encoder(arch, width_multiplier, seed, dtype)
    rng = np.random.default_rng([seed, 0x4EAD])
    _build_mlp(online, rng, "projector", sc.representation_dim, sc.hidden_dim, sc.projection_dim, dtype)
    _build_mlp(online, rng, "predictor", sc.projection_dim, sc.hidden_dim, sc.projection_dim, dtype)
    target = online.subset(("encoder.", "projector."))
    return online, target


def build_classifier_params(arch: ArchDescriptor, width_multiplier: float, seed: int,
                            class_count: int, dtype=np.float32,
                            encoder: ParamSet | None = None) -> ParamSet:
    """Encoder plus a single linear head; encoder weights may be donated."""
    sc = scale_arch(arch, width_multiplier)
    if encoder is None:
        ps = build_encoder(arch, width_multiplier, seed, dtype)
    else:
        ps = encoder.subset(("encoder.",))
    rng = np.random.default_rng([seed, 0xC1A5])
    ps.tensors["head.w"] = _uniform(rng, (class_count, sc.representation_dim), sc.representation_dim, dtype)
    ps.tensors["head.b"] = np.zeros(class_count, dtype=dtype)
    return ps


def wrap_trainable(ps: ParamSet, requires_grad: bool = True,
                   trainable_prefixes: tuple[str, ...] | None = None) -> dict[str, Tensor]:
    """Wrap every learnable array as a Tensor for one forward/backward pass."""
    out = {}
    for name, arr in ps.trainable_items():
        req = requires_grad and (trainable_prefixes is None or name.startswith(trainable_prefixes))
        out[name] = Tensor(arr, requires_grad=req)
    return out


def extract_grads(wrapped: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {name: t.grad for name, t in wrapped.items() if t.requires_grad and t.grad is not None}


class BNProbe:
    """Optional instrumentation: records (layer, mode) for every BN call."""

    def __init__(self):
        self.calls: list[tuple[str, str]] = []

    def record(self, name: str, mode: str) -> None:
        self.calls.append((name, mode))


def _bn_layer(x, name, wrapped, ps, mode, collector, probe):
    stats = ps.bn[name]
    if probe is not None:
        probe.record(name, mode)
    out, mu_b, var_b = batch_norm(
        x, wrapped[f"{name}.gamma"], wrapped[f"{name}.beta"],
        stats.mu, stats.sigma2, stats.epsilon, mode,
    )
    if mode == "train" and collector is not None:
        collector.setdefault(name, []).append((mu_b, var_b))
    return out


def encoder_forward(wrapped, ps: ParamSet, sc: ScaledArch, x: Tensor, adjacency: np.ndarray,
                    mode: str, collector: dict | None = None, probe: BNProbe | None = None,
                    prefix: str = "encoder") -> Tensor:
    """[B, T, J, C_in] -> pooled representation [B, D]."""
    if x.shape[3] != sc.in_channels:
        raise DataError(f"expected {sc.in_channels} input channels, got {x.shape[3]}")
    h = x
    for i, blk in enumerate(sc.blocks):
        base = f"{prefix}.block{i}"
        z = graph_conv(h, wrapped[f"{base}.gcn.w"], adjacency)
        z = _bn_layer(z, f"{base}.bn1", wrapped, ps, mode, collector, probe)
        z = relu(z)
        z = temporal_conv(z, wrapped[f"{base}.tcn.w"], blk.stride)
        z = _bn_layer(z, f"{base}.bn2", wrapped, ps, mode, collector, probe)
        if blk.residual:
            if blk.in_channels == blk.out_channels and blk.stride == 1:
                r = h
            else:
                r = h[:, :: blk.stride]
                r = einsum("oc,btjc->btjo", wrapped[f"{base}.res.w"], r)
                r = _bn_layer(r, f"{base}.bnres", wrapped, ps, mode, collector, probe)
            z = z + r
        h = relu(z)
    return global_avg_pool(h)


def mlp_forward(wrapped, ps: ParamSet, prefix: str, x: Tensor, mode: str,
                collector: dict | None = None, probe: BNProbe | None = None) -> Tensor:
    h = linear(x, wrapped[f"{prefix}.fc1.w"], wrapped[f"{prefix}.fc1.b"])
    h = _bn_layer(h, f"{prefix}.bn", wrapped, ps, mode, collector, probe)
    h = relu(h)
    return linear(h, wrapped[f"{prefix}.fc2.w"], wrapped[f"{prefix}.fc2.b"])


def classifier_forward(wrapped, ps: ParamSet, sc: ScaledArch, x: Tensor, adjacency: np.ndarray,
                       encoder_mode: str, collector: dict | None = None,
                       probe: BNProbe | None = None) -> Tensor:
    y = encoder_forward(wrapped, ps, sc, x, adjacency, encoder_mode, collector, probe)
    return linear(y, wrapped["head.w"], wrapped["head.b"])
