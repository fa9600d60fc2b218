"""Tape-free reverse-mode differentiation over float64 numpy arrays.

Each :class:`Tensor` produced by an operation keeps references to its inputs
and a closure mapping the output gradient to input gradients. Calling
``backward`` on a scalar walks the graph once in reverse topological order,
accumulating gradients additively into ``.grad``.

Only the primitives needed by the attention network are provided.
"""
from __future__ import annotations

import contextlib

import numpy as np

from .errors import ShapeMismatch

__all__ = [
    "Tensor",
    "no_grad",
    "is_grad_enabled",
    "matmul",
    "add",
    "layer_norm",
    "softmax",
    "relu",
    "embedding_lookup",
    "concat",
    "mask_fill",
    "log",
    "clamp_min",
    "dropout",
    "grad_check",
]

DTYPE = np.float64
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording backward closures."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled():
    return _grad_enabled


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
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
        grads = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else prev + pg

    # arithmetic sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, -_lift(other))

    def __rsub__(self, other):
        return add(_lift(other), -self)

    def __neg__(self):
        return _make(-self.data, (self,), lambda g: (-g,))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        return _make(self.data.reshape(shape), (self,), lambda g: (g.reshape(src),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        return _make(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),))

    def sum(self, axis=None, keepdims=False):
        src = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, src).copy(),)

        return _make(self.data.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def __getitem__(self, idx):
        src = self.shape

        def back(g):
            out = np.zeros(src, dtype=DTYPE)
            np.add.at(out, idx, g)
            return (out,)

        return _make(self.data[idx], (self,), back)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def add(a, b):
    a, b = _lift(a), _lift(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}") from exc
    sa, sb = a.shape, b.shape
    return _make(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def mul(a, b):
    a, b = _lift(a), _lift(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}") from exc
    sa, sb = a.shape, b.shape
    return _make(out, (a, b), lambda g: (_unbroadcast(g * b.data, sa), _unbroadcast(g * a.data, sb)))


def matmul(a, b):
    """Matrix product with numpy batching rules; both operands at least 2-D."""
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    sa, sb = a.shape, b.shape

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, sa),
                None if gb is None else _unbroadcast(gb, sb))

    return _make(np.matmul(a.data, b.data), (a, b), back)


def softmax(x, axis=-1):
    x = _lift(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), back)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalise over the last axis, then scale and shift."""
    x, gain, bias = _lift(x), _lift(gain), _lift(bias)
    if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise ShapeMismatch(f"layer_norm: {x.shape} with gain {gain.shape}, bias {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    lead = tuple(range(x.ndim - 1))

    def back(g):
        gx = gh = gb = None
        if x.requires_grad:
            dxhat = g * gain.data
            gx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        if gain.requires_grad:
            gh = (g * xhat).sum(axis=lead)
        if bias.requires_grad:
            gb = g.sum(axis=lead)
        return gx, gh, gb

    return _make(out, (x, gain, bias), back)


def relu(x):
    x = _lift(x)
    pos = x.data > 0
    return _make(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


def embedding_lookup(table, ids):
    """Gather rows of ``table`` (any rank) along the first axis."""
    table = _lift(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeMismatch(f"embedding_lookup: index out of range for {table.shape[0]} rows")
    src = table.shape

    def back(g):
        out = np.zeros(src, dtype=DTYPE)
        np.add.at(out, ids, g)
        return (out,)

    return _make(table.data[ids], (table,), back)


def concat(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat: {[t.shape for t in tensors]}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tuple(tensors), back)


def mask_fill(x, mask, value=-np.inf):
    """Replace entries where ``mask`` is true; they receive no gradient."""
    x = _lift(x)
    mask = np.asarray(mask, dtype=bool)
    try:
        out = np.where(mask, value, x.data)
    except ValueError as exc:
        raise ShapeMismatch(f"mask_fill: {x.shape} vs mask {mask.shape}") from exc
    if out.shape != x.shape:
        raise ShapeMismatch(f"mask_fill: mask {mask.shape} widens {x.shape}")
    keep = ~mask
    return _make(out, (x,), lambda g: (g * keep,))


def log(x):
    x = _lift(x)
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def clamp_min(x, lo):
    """``max(x, lo)``; the gradient is cut where the floor is active."""
    x = _lift(x)
    live = x.data >= lo
    return _make(np.where(live, x.data, lo), (x,), lambda g: (g * live,))


def dropout(x, rate, rng):
    if rate <= 0.0 or not _grad_enabled:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, keep)


def grad_check(f, theta: Tensor, h=1e-5, floor=1e-4):
    """Largest componentwise relative error between reverse-mode and
    central-difference gradients of the scalar function ``f`` at ``theta``.

    The error for component ``i`` is ``|a_i - n_i| / max(|a_i|, |n_i|, floor)``
    so that components with vanishing gradient are compared absolutely.
    ``theta.data`` is perturbed in place and restored.
    """
    theta.requires_grad = True
    theta.grad = None
    out = f(theta)
    out.backward()
    analytic = np.zeros_like(theta.data) if theta.grad is None else theta.grad.copy()
    numeric = np.zeros_like(theta.data)
    flat = theta.data.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(theta).data)
            flat[i] = orig - h
            fm = float(f(theta).data)
            flat[i] = orig
            numeric.reshape(-1)[i] = (fp - fm) / (2 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if flat.size else 0.0
