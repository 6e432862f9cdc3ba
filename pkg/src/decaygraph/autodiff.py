"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough surface for the decay-smoothed GCN stack: broadcast-aware
arithmetic, matmul, transpose, relu, sigmoid, axis sums, elementwise power,
dropout masks, and a fused stable softmax cross-entropy. Every forward op
records its backward closure on the node; ``backward()`` walks the graph in
reverse topological order. A graph can be differentiated once.
"""

from __future__ import annotations

import numpy as np


class TapeError(RuntimeError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over axes that were broadcast to reach the target shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Var:
    """Node in the computation graph."""

    __slots__ = ("value", "grad", "parents", "_backward", "requires_grad")

    def __init__(self, value, parents=(), backward=None, requires_grad=True):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable Var."""
        if self.value.shape != ():
            raise TapeError("backward() requires a scalar output")
        order: list[Var] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad:
                    stack.append((p, False))
        if any(n.grad is not None for n in order):
            raise TapeError("graph already differentiated")
        self.grad = np.ones(())
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else constant(x)


def constant(value) -> Var:
    return Var(value, requires_grad=False)


def _accumulate(node: Var, grad: np.ndarray) -> None:
    if not node.requires_grad:
        return
    node.grad = grad if node.grad is None else node.grad + grad


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = Var(a.value + b.value, parents=(a, b))

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    out._backward = bwd
    return out


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = Var(a.value - b.value, parents=(a, b))

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    out._backward = bwd
    return out


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = Var(a.value * b.value, parents=(a, b))

    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.value, a.shape))
        _accumulate(b, _unbroadcast(g * a.value, b.shape))

    out._backward = bwd
    return out


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = Var(a.value @ b.value, parents=(a, b))

    def bwd(g):
        _accumulate(a, g @ b.value.T)
        _accumulate(b, a.value.T @ g)

    out._backward = bwd
    return out


def transpose(a: Var) -> Var:
    a = as_var(a)
    out = Var(a.value.T, parents=(a,))
    out._backward = lambda g: _accumulate(a, g.T)
    return out


def relu(a: Var) -> Var:
    a = as_var(a)
    mask = a.value > 0
    out = Var(a.value * mask, parents=(a,))
    out._backward = lambda g: _accumulate(a, g * mask)
    return out


def sigmoid(a: Var) -> Var:
    a = as_var(a)
    s = 1.0 / (1.0 + np.exp(-a.value))
    out = Var(s, parents=(a,))
    out._backward = lambda g: _accumulate(a, g * s * (1.0 - s))
    return out


def power(a: Var, exponent: float) -> Var:
    a = as_var(a)
    out = Var(a.value**exponent, parents=(a,))
    out._backward = lambda g: _accumulate(
        a, g * exponent * a.value ** (exponent - 1.0)
    )
    return out


def sum_axis(a: Var, axis: int, keepdims: bool = True) -> Var:
    a = as_var(a)
    out = Var(a.value.sum(axis=axis, keepdims=keepdims), parents=(a,))

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape).copy())

    out._backward = bwd
    return out


def dropout(a: Var, rate: float, rng: np.random.Generator) -> Var:
    """Inverted dropout; identity when rate == 0."""
    if rate == 0.0:
        return a
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, constant(mask))


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Plain (non-recorded) row softmax of a value array, stable."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: Var, labels: np.ndarray, mask: np.ndarray) -> Var:
    """Mean negative log-likelihood over masked rows, from pre-softmax values.

    Fused log-sum-exp formulation; gradients are (softmax - onehot) / m on
    the masked rows.
    """
    logits = as_var(logits)
    mask = np.asarray(mask)
    if mask.dtype == bool:
        mask = np.flatnonzero(mask)
    if mask.size == 0:
        raise TapeError("cross entropy over an empty mask")
    z = logits.value[mask]
    y = np.asarray(labels)[mask]
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(mask.size), y]))
    out = Var(loss, parents=(logits,))

    def bwd(g):
        grad = np.zeros_like(logits.value)
        p = softmax_rows(z)
        p[np.arange(mask.size), y] -= 1.0
        grad[mask] = g * p / mask.size
        _accumulate(logits, grad)

    out._backward = bwd
    return out
