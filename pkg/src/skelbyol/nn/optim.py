"""SGD with momentum and selective weight decay.

Weight decay is skipped for BN scale/shift and biases. The learning rate
may be a single float or a (prefix -> lr) mapping so fine-tuning can drive
the encoder and the head at different rates with shared momentum buffers.
"""

from __future__ import annotations

import numpy as np

from .network import ParamSet

_NO_DECAY_SUFFIXES = (".gamma", ".beta", ".b")


def _lr_for(name: str, lr) -> float:
    if isinstance(lr, dict):
        for prefix, value in lr.items():
            if name.startswith(prefix):
                return value
        raise KeyError(f"no learning rate configured for parameter {name}")
    return lr


def sgd_step(
    params: ParamSet,
    grads: dict[str, np.ndarray],
    lr,
    momentum: float = 0.9,
    weight_decay: float = 0.0,
    buffers: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """buf <- momentum*buf + grad (+ wd*param); param <- param - lr*buf.

    Updates arrays in place and returns the momentum buffers.
    """
    if buffers is None:
        buffers = {}
    for name, param in params.trainable_items():
        g = grads.get(name)
        if g is None:
            continue
        if weight_decay and not name.endswith(_NO_DECAY_SUFFIXES):
            g = g + weight_decay * param
        buf = buffers.get(name)
        if buf is None:
            buf = g.astype(param.dtype, copy=True)
        else:
            buf *= momentum
            buf += g
        buffers[name] = buf
        step_lr = _lr_for(name, lr)
        if step_lr:
            param -= (step_lr * buf).astype(param.dtype, copy=False)
    return buffers


def ema_update(target: ParamSet, online: ParamSet, lam: float) -> None:
    """xi <- lam*xi + (1-lam)*theta for every parameter the target shares."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"EMA momentum must be in [0, 1], got {lam}")
    online_map = dict(online.trainable_items())
    for name, arr in target.trainable_items():
        src = online_map[name]
        arr *= lam
        arr += (1.0 - lam) * src
