"""A small tape-free reverse-mode autodiff engine over numpy arrays.

Each op builds a :class:`Tensor` that remembers its parents and a closure
that pushes the output gradient back to them. ``Tensor.backward`` walks the
graph in reverse topological order. Only the ops the transformer needs are
provided; several (layer norm, softmax, cross-entropy) are fused for speed.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents: Sequence["Tensor"] = (),
                 backward: Callable[[np.ndarray], None] | None = None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.ones_like(self.data) if grad is None else grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    # interior gradients are not needed once propagated
                    node.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _result(data, parents, backward) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, needs, parents if needs else (), backward if needs else None)


def unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)

    def back(g):
        if a.requires_grad:
            a._accum(unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(unbroadcast(g, b.shape))
    return _result(a.data + b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)

    def back(g):
        if a.requires_grad:
            a._accum(unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(unbroadcast(g * a.data, b.shape))
    return _result(a.data * b.data, (a, b), back)


def matmul(a, b) -> Tensor:
    a, b = _t(a), _t(b)

    def back(g):
        if a.requires_grad:
            a._accum(unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            if b.data.ndim == 2 and a.data.ndim > 2:
                ga = a.data.reshape(-1, a.shape[-1])
                b._accum(ga.T @ g.reshape(-1, g.shape[-1]))
            else:
                b._accum(unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))
    return _result(a.data @ b.data, (a, b), back)


def linear(x, w, b=None) -> Tensor:
    """x @ w + b with ``w`` of shape [in, out]."""
    x, w = _t(x), _t(w)
    parents = (x, w) if b is None else (x, w, _t(b))
    out = x.data @ w.data
    if b is not None:
        out = out + parents[2].data

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        if x.requires_grad:
            x._accum(g @ w.data.T)
        if w.requires_grad:
            w._accum(x.data.reshape(-1, x.shape[-1]).T @ g2)
        if b is not None and parents[2].requires_grad:
            parents[2]._accum(g2.sum(axis=0))
    return _result(out, parents, back)


def reshape(x, shape) -> Tensor:
    x = _t(x)
    return _result(x.data.reshape(shape), (x,), lambda g: x._accum(g.reshape(x.shape)))


def transpose(x, axes) -> Tensor:
    x = _t(x)
    inv = np.argsort(axes)
    return _result(x.data.transpose(axes), (x,), lambda g: x._accum(g.transpose(inv)))


def embedding(table, idx) -> Tensor:
    table = _t(table)
    idx = np.asarray(idx)

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, table.shape[-1]))
        table._accum(full)
    return _result(table.data[idx], (table,), back)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    x, gain, bias = _t(x), _t(gain), _t(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def back(g):
        if gain.requires_grad:
            gain._accum((g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if bias.requires_grad:
            bias._accum(g.reshape(-1, x.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gx = g * gain.data
            gx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                        - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
            x._accum(gx)
    return _result(out, (x, gain, bias), back)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x) -> Tensor:
    """tanh approximation of GELU."""
    x = _t(x)
    d = x.data
    inner = _GELU_C * (d + 0.044715 * (d * d * d))
    th = np.tanh(inner)
    out = 0.5 * d * (1.0 + th)

    def back(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * d * d)
        x._accum(g * (0.5 * (1.0 + th) + 0.5 * d * (1.0 - th * th) * dinner))
    return _result(out, (x,), back)


def softmax(x, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; entries where ``mask`` is False get zero weight."""
    x = _t(x)
    z = x.data if mask is None else np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        x._accum(p * (g - (g * p).sum(axis=-1, keepdims=True)))
    return _result(p, (x,), back)


def log_softmax_np(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits, targets: np.ndarray, weights: np.ndarray) -> Tensor:
    """Weighted mean of -log softmax(logits)[target] over the leading axes."""
    logits = _t(logits)
    V = logits.shape[-1]
    flat = logits.data.reshape(-1, V)
    t = np.asarray(targets).reshape(-1)
    w = np.asarray(weights, dtype=flat.dtype).reshape(-1)
    total = w.sum()
    if total <= 0:
        raise ValueError("cross_entropy needs at least one weighted position")
    logp = log_softmax_np(flat)
    rows = np.arange(len(t))
    loss = -(logp[rows, t] * w).sum() / total

    def back(g):
        p = np.exp(logp)
        p[rows, t] -= 1.0
        p *= (w / total)[:, None] * g
        logits._accum(p.reshape(logits.shape))
    return _result(np.asarray(loss, dtype=flat.dtype), (logits,), back)
