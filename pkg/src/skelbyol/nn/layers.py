"""Differentiable layers: graph/temporal convolution, batch normalization,
linear maps, pooling, normalization, and the cross-entropy loss.

Layouts are channels-last: spatio-temporal feature maps are [B, T, J, C]
and vector features are [B, D], so every contraction lowers to one GEMM on
contiguous data. The convolutions and batch norm carry hand-written
vector-Jacobian products; everything else composes tape primitives.
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError, NumericalError
from .tensor import Tensor, einsum, exp, log, relu, sqrt, tmean, tsum

__all__ = [
    "graph_conv",
    "temporal_conv",
    "batch_norm",
    "linear",
    "relu",
    "global_avg_pool",
    "l2_normalize",
    "softmax_cross_entropy",
    "momentum_bn_update",
    "softmax",
]


def graph_conv(x: Tensor, w: Tensor, adjacency: np.ndarray) -> Tensor:
    """Mix features over joints with the normalized adjacency, then map channels.

    x: [B, T, J, C]; w: [C_out, C]; adjacency: [J, J] constant.
    """
    j = x.shape[2]
    if adjacency.shape != (j, j):
        raise DataError(f"adjacency {adjacency.shape} does not match J={j}")
    a = adjacency.astype(x.data.dtype)
    c_in = x.shape[3]
    xm = np.matmul(a, x.data)  # batched over [B, T]: sum_j a[i, j] x[b, t, j, c]
    out_data = (xm.reshape(-1, c_in) @ w.data.T).reshape(x.shape[:3] + (w.shape[0],))

    def backward(g):
        g2 = g.reshape(-1, w.shape[0])
        if w.requires_grad:
            w.accumulate(g2.T @ xm.reshape(-1, c_in))
        if x.requires_grad:
            dxm = (g2 @ w.data).reshape(xm.shape)
            x.accumulate(np.matmul(a.T, dxm))

    requires = x.requires_grad or w.requires_grad
    return Tensor(out_data, requires, (x, w) if requires else (), backward if requires else None)


def _tap_bounds(off: int, t: int, t_out: int, stride: int) -> tuple[int, int]:
    """Output range [lo, hi) whose input index t'*stride + off stays in [0, t)."""
    lo = 0 if off >= 0 else (-off + stride - 1) // stride
    hi = min(t_out, (t - 1 - off) // stride + 1)
    return lo, max(hi, lo)


def temporal_conv(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """1-D convolution along T per joint, 'same' zero padding, odd kernel.

    x: [B, T, J, C]; w: [C_out, C, k]; output [B, ceil(T/stride), J, C_out].
    Lowered to one im2col gather plus one GEMM; padding is implicit in the
    gather bounds so no padded copy of the input is ever materialized. The
    im2col buffer is kept for the backward GEMMs.
    """
    c_out, c_in, k = w.shape
    if k % 2 == 0:
        raise DataError(f"temporal kernel must be odd, got {k}")
    if stride < 1:
        raise DataError(f"stride must be >= 1, got {stride}")
    if x.shape[3] != c_in:
        raise DataError(f"kernel expects {c_in} channels, got {x.shape[3]}")
    b, t, j, _ = x.shape
    pad = (k - 1) // 2
    t_out = -(-t // stride)
    col = np.empty((b, t_out, j, k * c_in), dtype=x.data.dtype)
    for ki in range(k):
        off = ki - pad
        lo, hi = _tap_bounds(off, t, t_out, stride)
        blk = col[..., ki * c_in : (ki + 1) * c_in]
        if lo > 0:
            blk[:, :lo] = 0.0
        if hi < t_out:
            blk[:, hi:] = 0.0
        if hi > lo:
            blk[:, lo:hi] = x.data[:, lo * stride + off : (hi - 1) * stride + off + 1 : stride]
    wmat = np.ascontiguousarray(w.data.transpose(2, 1, 0).reshape(k * c_in, c_out))
    out_data = (col.reshape(-1, k * c_in) @ wmat).reshape(b, t_out, j, c_out)

    def backward(g):
        g2 = g.reshape(-1, c_out)
        if w.requires_grad:
            dwmat = col.reshape(-1, k * c_in).T @ g2
            w.accumulate(dwmat.reshape(k, c_in, c_out).transpose(2, 1, 0))
        if x.requires_grad:
            dcol = (g2 @ wmat.T).reshape(b, t_out, j, k * c_in)
            dx = np.zeros_like(x.data)
            for ki in range(k):
                off = ki - pad
                lo, hi = _tap_bounds(off, t, t_out, stride)
                if hi > lo:
                    dx[:, lo * stride + off : (hi - 1) * stride + off + 1 : stride] += \
                        dcol[:, lo:hi, :, ki * c_in : (ki + 1) * c_in]
            x.accumulate(dx)

    requires = x.requires_grad or w.requires_grad
    return Tensor(out_data, requires, (x, w) if requires else (), backward if requires else None)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mu: np.ndarray,
    running_sigma2: np.ndarray,
    epsilon: float,
    mode: str,
) -> tuple[Tensor, np.ndarray | None, np.ndarray | None]:
    """Normalize per channel (the last axis).

    Train mode normalizes with the current batch statistics and returns them
    (detached) so callers can update running averages; eval mode uses the
    running statistics as constants. Returns (out, batch_mu, batch_sigma2).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    axes = tuple(range(x.ndim - 1))
    requires = x.requires_grad or gamma.requires_grad or beta.requires_grad

    if mode == "train":
        n = int(np.prod([x.shape[a] for a in axes]))
        if n < 2:
            raise DataError("train-mode batch norm needs an effective batch of at least 2")
        mu = x.data.mean(axis=axes)
        xc = x.data - mu
        var = np.mean(xc * xc, axis=axes)
        inv = 1.0 / np.sqrt(var + epsilon)
        xc *= inv
        xn = xc
        out_data = xn * gamma.data
        out_data += beta.data

        def backward(g):
            if gamma.requires_grad:
                gamma.accumulate((g * xn).sum(axis=axes))
            if beta.requires_grad:
                beta.accumulate(g.sum(axis=axes))
            if x.requires_grad:
                dxn = g * gamma.data
                m1 = dxn.mean(axis=axes)
                m2 = (dxn * xn).mean(axis=axes)
                x.accumulate(inv * (dxn - m1 - xn * m2))

        out = Tensor(out_data, requires, (x, gamma, beta) if requires else (),
                     backward if requires else None)
        return out, mu.copy(), var.copy()

    inv = (1.0 / np.sqrt(running_sigma2 + epsilon)).astype(x.data.dtype)
    mu_c = running_mu.astype(x.data.dtype)
    scale = gamma.data * inv
    out_data = x.data * scale
    out_data += beta.data - mu_c * scale

    def backward_eval(g):
        if gamma.requires_grad:
            gamma.accumulate((g * ((x.data - mu_c) * inv)).sum(axis=axes))
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=axes))
        if x.requires_grad:
            x.accumulate(g * scale)

    out = Tensor(out_data, requires, (x, gamma, beta) if requires else (),
                 backward_eval if requires else None)
    return out, None, None


def momentum_bn_update(stats, batch_mu: np.ndarray, batch_sigma2: np.ndarray, alpha: float) -> None:
    """Exponential moving average of batch statistics, in place.

    mu <- alpha*mu + (1-alpha)*mu_b and likewise for the variance; the
    learned scale/shift are untouched.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    stats.mu[...] = alpha * stats.mu + (1.0 - alpha) * batch_mu
    stats.sigma2[...] = alpha * stats.sigma2 + (1.0 - alpha) * batch_sigma2


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x: [B, D_in]; w: [D_out, D_in]; optional bias [D_out]."""
    out = einsum("oi,bi->bo", w, x)
    if b is not None:
        out = out + b
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """Average over time and joints: [B, T, J, C] -> [B, C]."""
    return tmean(x, axis=(1, 2))


def l2_normalize(x: Tensor, eps_check: float = 1e-12) -> Tensor:
    """Scale every row of [B, D] to unit Euclidean norm."""
    sq = tsum(x * x, axis=1, keepdims=True)
    if np.any(sq.data < eps_check):
        raise NumericalError("l2_normalize: zero-norm row")
    return x / sqrt(sq)


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy between softmax(logits) and target distributions.

    ``targets`` is either an int class-index array [B] or a probability
    matrix [B, K]. The gradient w.r.t. logits is (softmax - p) / B.
    """
    b, k = logits.shape
    if k < 2:
        raise DataError("need at least 2 classes")
    p = np.asarray(targets)
    if p.ndim == 1:
        onehot = np.zeros((b, k), dtype=logits.data.dtype)
        onehot[np.arange(b), p.astype(np.int64)] = 1.0
        p = onehot
    if p.shape != (b, k):
        raise DataError(f"targets shape {p.shape} does not match logits {(b, k)}")
    shift = Tensor(np.max(logits.data, axis=1, keepdims=True))  # constant, exact
    s = logits - shift
    lse = log(tsum(exp(s), axis=1, keepdims=True))
    per_row = tsum(Tensor(p.astype(logits.data.dtype)) * (lse - s), axis=1)
    return tmean(per_row)


def softmax(logits: np.ndarray, axis: int = 1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)
