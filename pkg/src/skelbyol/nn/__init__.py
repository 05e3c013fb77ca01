"""Dense-tensor numerical kernels with exact reverse-mode gradients."""

from .checkpoint import CheckpointBundle, load_checkpoint, save_checkpoint
from .layers import (
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
from .network import (
    ArchDescriptor,
    BlockSpec,
    BNProbe,
    BNStats,
    ParamSet,
    build_byol_params,
    build_classifier_params,
    build_encoder,
    classifier_forward,
    desk_arch,
    encoder_forward,
    extract_grads,
    mlp_forward,
    scale_arch,
    wrap_trainable,
)
from .optim import ema_update, sgd_step
from .tensor import Tensor, einsum, relu

__all__ = [
    "ArchDescriptor",
    "BlockSpec",
    "BNProbe",
    "BNStats",
    "CheckpointBundle",
    "ParamSet",
    "Tensor",
    "batch_norm",
    "build_byol_params",
    "build_classifier_params",
    "build_encoder",
    "classifier_forward",
    "desk_arch",
    "einsum",
    "ema_update",
    "encoder_forward",
    "extract_grads",
    "global_avg_pool",
    "graph_conv",
    "l2_normalize",
    "linear",
    "load_checkpoint",
    "mlp_forward",
    "momentum_bn_update",
    "relu",
    "save_checkpoint",
    "scale_arch",
    "sgd_step",
    "softmax",
    "softmax_cross_entropy",
    "temporal_conv",
    "wrap_trainable",
]
