"""Reverse-mode automatic differentiation on dense numpy arrays.

A Tensor wraps an ndarray and records the operation that produced it.
Calling ``backward()`` on a scalar loss walks the recorded graph in reverse
topological order and accumulates exact gradients into every tensor that
was created with ``requires_grad=True``.

Only the operations the package needs are implemented; each op defines its
own vector-Jacobian product. ``einsum`` covers every contraction (linear
layers, graph convolution) with a generic VJP.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def accumulate(self, g: np.ndarray) -> None:
        # First hit keeps a reference: upstream gradients are never mutated
        # after hand-off. Later hits add out of place because the stored
        # array may be shared with a sibling branch.
        if self.grad is None:
            self.grad = g if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad = self.grad + g

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        """Seed with ones and back-propagate through the recorded graph."""
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic sugar
    def __add__(self, other):
        return add(self, _lift(other, self))

    def __radd__(self, other):
        return add(_lift(other, self), self)

    def __sub__(self, other):
        return add(self, neg(_lift(other, self)))

    def __rsub__(self, other):
        return add(_lift(other, self), neg(self))

    def __mul__(self, other):
        return mul(self, _lift(other, self))

    def __rmul__(self, other):
        return mul(_lift(other, self), self)

    def __truediv__(self, other):
        return div(self, _lift(other, self))

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return take(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _node(data, parents, backward) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    return Tensor(data, requires, parents if requires else (), backward if requires else None)


def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.accumulate(-g)

    return _node(-a.data, (a,), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _node(a.data / b.data, (a, b), backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        a.accumulate(g * out_data)

    return _node(out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate(g / a.data)

    return _node(np.log(a.data), (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def backward(g):
        a.accumulate(g * (0.5 / out_data))

    return _node(out_data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        a.accumulate(g * (out_data > 0))

    return _node(out_data, (a,), backward)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def backward(g):
        gg = g
        if not keepdims and axis is not None:
            gg = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(gg, a.shape).copy())

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[ax] for ax in axes]))

    def backward(g):
        gg = g
        if not keepdims and axis is not None:
            gg = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(gg, a.shape) / n)

    return _node(a.data.mean(axis=axis, keepdims=keepdims), (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape

    def backward(g):
        a.accumulate(g.reshape(old))

    return _node(a.data.reshape(shape), (a,), backward)


def take(a: Tensor, key) -> Tensor:
    """Basic slicing with scatter-add backward. No fancy indexing."""

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] += g
        a.accumulate(full)

    return _node(a.data[key], (a,), backward)


def pad_axis(a: Tensor, axis: int, before: int, after: int) -> Tensor:
    """Zero padding along one axis; backward slices the pad away."""
    widths = [(0, 0)] * a.ndim
    widths[axis] = (before, after)
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(before, before + a.shape[axis])
    sl = tuple(sl)

    def backward(g):
        a.accumulate(g[sl])

    return _node(np.pad(a.data, widths), (a,), backward)


def einsum(subscripts: str, *tensors: Tensor) -> Tensor:
    """General contraction with an einsum-based vector-Jacobian product.

    Every index of each operand must also appear in the output or in another
    operand (true for all contractions used here); this keeps the VJP a
    plain einsum with the output and operand subscripts swapped.
    """
    spec = subscripts.replace(" ", "")
    in_spec, out_spec = spec.split("->")
    in_specs = in_spec.split(",")
    if len(in_specs) != len(tensors):
        raise ValueError(f"einsum spec {subscripts!r} expects {len(in_specs)} operands")
    for i, sub in enumerate(in_specs):
        rest = out_spec + "".join(s for j, s in enumerate(in_specs) if j != i)
        if any(c not in rest for c in sub):
            raise ValueError(f"operand {i} of {subscripts!r} has an index unsupported by the VJP")
    datas = [t.data for t in tensors]
    out_data = np.einsum(spec, *datas, optimize=True)

    def backward(g):
        for i, t in enumerate(tensors):
            if not t.requires_grad:
                continue
            others = [(in_specs[j], datas[j]) for j in range(len(tensors)) if j != i]
            vjp_spec = ",".join([out_spec] + [s for s, _ in others]) + "->" + in_specs[i]
            t.accumulate(np.einsum(vjp_spec, g, *[d for _, d in others], optimize=True))

    return _node(out_data, tuple(tensors), backward)
