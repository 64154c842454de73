"""A small reverse-mode differentiation engine over float64 numpy arrays.

Every op returns a new :class:`Tensor` that remembers its inputs and a
closure mapping the output gradient to input gradients. Tensors carry a
global creation sequence number, so sorting the reachable nodes by that
number in descending order replays the recorded tape in exact reverse
execution order.
"""

from __future__ import annotations

import itertools

import numpy as np

from depfuse.errors import (
    BackwardTwice,
    DetachedGraph,
    EmptyMaskRow,
    IndexOutOfRange,
    ShapeMismatch,
)

_seq = itertools.count()

# finiteness is asserted after every op; switch off for speed if needed
CHECK_FINITE = True


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_seq", "_released")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = _backward
        self._seq = next(_seq)
        self._released = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    @property
    def T(self):
        return transpose(self)

    def __getitem__(self, key):
        return getitem(self, key)


class Parameter(Tensor):
    """A trainable leaf tensor with a unique name inside its model."""

    __slots__ = ("name", "weight_decay_eligible")

    def __init__(self, data, name: str, weight_decay_eligible: bool = True):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.weight_decay_eligible = weight_decay_eligible

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    if CHECK_FINITE and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced")
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, needs, parents if needs else (), backward if needs else None)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"cannot broadcast {a.shape} with {b.shape}") from None


# ----------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _make(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _make(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _make(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _make(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    pos = x.data > 0
    scale = np.where(pos, 1.0, slope)
    return _make(x.data * scale, (x,), lambda g: (g * scale,))


# ------------------------------------------------------------------ structural

_MATMUL_SUBSCRIPTS = {(2, 2): "ij,jk->ik", (2, 1): "ij,j->i", (1, 2): "j,jk->k", (1, 1): "i,i->"}


def matmul(a, b) -> Tensor:
    """Matrix product.

    The forward pass uses einsum's own loops rather than BLAS: BLAS kernels
    may accumulate a row differently depending on where it sits in the
    matrix, which would break bit-exact equivariance under row permutation.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")

    def back(g):
        if a.ndim == 2 and b.ndim == 2:
            return g @ b.data.T, a.data.T @ g
        if a.ndim == 2:  # matrix @ vector
            return np.outer(g, b.data), a.data.T @ g
        if b.ndim == 2:  # vector @ matrix
            return b.data @ g, np.outer(a.data, g)
        return g * b.data, g * a.data

    out = np.einsum(_MATMUL_SUBSCRIPTS[a.ndim, b.ndim], a.data, b.data)
    return _make(out, (a, b), back)


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    def back(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.shape).copy(),)

    return _make(x.data.sum(axis=axis, keepdims=keepdims), (x,), back)


def reshape(x: Tensor, shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"cannot reshape {x.shape} to {shape}") from None
    return _make(out, (x,), lambda g: (g.reshape(x.shape),))


def getitem(x: Tensor, key) -> Tensor:
    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, key, g)
        return (gx,)

    return _make(x.data[key], (x,), back)


def transpose(x: Tensor) -> Tensor:
    return _make(x.data.T, (x,), lambda g: (g.T,))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tuple(tensors), back)


def embedding_lookup(table: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexOutOfRange(f"indices outside table of {table.shape[0]} rows")

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _make(table.data[idx], (table,), back)


def mean_rows(x: Tensor, groups) -> Tensor:
    """Row means of ``x`` for each group of 0-based row indices; shape (len(groups), d)."""
    groups = [np.asarray(g, dtype=np.int64) for g in groups]
    for g in groups:
        if g.size == 0:
            raise ShapeMismatch("mean over an empty row set")
        if g.min() < 0 or g.max() >= x.shape[0]:
            raise IndexOutOfRange(f"rows {g.tolist()} outside 0..{x.shape[0] - 1}")
    out = np.stack([x.data[g].mean(axis=0) for g in groups])

    def back(gout):
        gx = np.zeros_like(x.data)
        for k, g in enumerate(groups):
            np.add.at(gx, g, gout[k] / len(g))
        return (gx,)

    return _make(out, (x,), back)


# ------------------------------------------------------------- normalization

def _sorted_sum(values, axis=-1):
    # summing in sorted order makes the result independent of how the
    # entries along ``axis`` were ordered (node relabeling)
    return np.sort(values, axis=axis).sum(axis=axis)


def masked_softmax(logits: Tensor, mask) -> Tensor:
    """Softmax along the last axis restricted to entries where ``mask`` is true.

    Masked entries get probability exactly zero.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs logits {logits.shape}")
    if not mask.any(axis=-1).all():
        raise EmptyMaskRow("every row needs at least one unmasked entry")
    x = np.where(mask, logits.data, -np.inf)
    m = x.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(x - m), 0.0)
    y = e / _sorted_sum(e)[..., None]

    def back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (logits,), back)


def softmax(logits: Tensor) -> Tensor:
    return masked_softmax(logits, np.ones(logits.shape, dtype=bool))


def neighbor_sum(weights: Tensor, values: Tensor) -> Tensor:
    """``weights @ values`` with each output summed in sorted order.

    Equivalent to a matmul, but invariant bit-for-bit under a joint
    permutation of the weights' columns and the value rows.
    """
    w, v = weights.data, values.data
    if w.ndim != 2 or v.ndim != 2 or w.shape[1] != v.shape[0]:
        raise ShapeMismatch(f"neighbor_sum {w.shape} x {v.shape}")
    prod = w[:, None, :] * v.T[None, :, :]  # (n, d, n)
    out = _sorted_sum(prod)

    def back(g):
        return g @ v.T, w.T @ g

    return _make(out, (weights, values), back)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; the identity when not training or p == 0."""
    if not training or p <= 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _make(x.data * keep, (x,), lambda g: (g * keep,))


def cross_entropy(logits: Tensor, gold) -> Tensor:
    """Mean negative log-likelihood of ``gold`` class indices (log-sum-exp form)."""
    gold = np.asarray(gold, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != gold.shape[0]:
        raise ShapeMismatch(f"logits {logits.shape} vs {gold.shape[0]} gold labels")
    b, c = logits.shape
    if gold.size and (gold.min() < 0 or gold.max() >= c):
        raise IndexOutOfRange(f"gold labels outside 0..{c - 1}")
    x = logits.data
    m = x.max(axis=1, keepdims=True)
    shifted = x - m
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(b)
    nll = lse - shifted[rows, gold]
    probs = np.exp(shifted - lse[:, None])

    def back(g):
        d = probs.copy()
        d[rows, gold] -= 1.0
        return (d * (g / b),)

    return _make(np.asarray(nll.mean()), (logits,), back)


# ---------------------------------------------------------------- backward

def backward(loss: Tensor, params=None):
    """Back-propagate from a scalar ``loss``.

    Gradients accumulate into ``.grad`` of every reachable leaf that
    requires grad. The recorded graph is released afterwards, so calling
    this twice on the same loss raises :class:`BackwardTwice`. When
    ``params`` is given, returns their gradients in order (zeros for
    parameters the loss does not depend on).
    """
    if loss._released:
        raise BackwardTwice("graph already consumed by a previous backward()")
    if loss.data.size != 1:
        raise ShapeMismatch(f"backward needs a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise DetachedGraph("loss does not depend on any tensor that requires grad")

    nodes = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in nodes:
            continue
        nodes[id(t)] = t
        stack.extend(p for p in t._parents if p.requires_grad)
    tape = sorted(nodes.values(), key=lambda t: t._seq, reverse=True)

    grads = {id(loss): np.ones_like(loss.data)}
    for t in tape:
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t._backward is None:
            t.grad = g.copy() if t.grad is None else t.grad + g
            continue
        for p, pg in zip(t._parents, t._backward(g)):
            if p.requires_grad and pg is not None:
                k = id(p)
                grads[k] = pg if k not in grads else grads[k] + pg
    for t in tape:
        if t._backward is not None:
            t._released = True
            t._backward = None
            t._parents = ()

    if params is not None:
        return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    return None
