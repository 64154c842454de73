"""Aspect-span pooling and the two-layer MLP sentiment head."""

from __future__ import annotations

import numpy as np

from depfuse.errors import SpanOutOfRange
from depfuse.nn import init
from depfuse.nn.tensor import (
    Tensor,
    add,
    as_tensor,
    cross_entropy,
    matmul,
    mean_rows,
    relu,
    softmax,
)

NUM_CLASSES = 3


def pool_aspect(h, spans) -> Tensor:
    """Mean of final-layer rows over each aspect span.

    ``spans`` holds 0-based row lists, one per instance; returns (B, d_h).
    """
    h = as_tensor(h)
    for rows in spans:
        if len(rows) == 0 or min(rows) < 0 or max(rows) >= h.shape[0]:
            raise SpanOutOfRange(f"aspect rows {list(rows)} outside 0..{h.shape[0] - 1}")
    return mean_rows(h, spans)


class AspectClassifier:
    """softmax(W2 relu(W1 h_t + b1) + b2); biases start at zero."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 prefix: str = "cls", bias: bool = True, num_classes: int = NUM_CLASSES):
        self.in_dim = in_dim
        self.w1 = init.glorot(rng, (out_dim, in_dim), f"{prefix}.w1")
        self.w2 = init.glorot(rng, (num_classes, out_dim), f"{prefix}.w2")
        self.bias = bias
        self.b1 = init.zeros((out_dim,), f"{prefix}.b1")
        self.b2 = init.zeros((num_classes,), f"{prefix}.b2")

    def parameters(self):
        ps = [self.w1, self.w2]
        if self.bias:
            ps += [self.b1, self.b2]
        return ps

    def logits(self, h_t) -> Tensor:
        z = matmul(as_tensor(h_t), self.w1.T)
        if self.bias:
            z = add(z, self.b1)
        z = matmul(relu(z), self.w2.T)
        if self.bias:
            z = add(z, self.b2)
        return z

    def classify(self, h_t) -> Tensor:
        return softmax(self.logits(h_t))


def training_loss(logits, golds) -> Tensor:
    """Mean cross-entropy. Weight decay lives in the optimizer, not here."""
    logits = as_tensor(logits)
    if logits.shape[0] == 0:
        raise ValueError("empty batch")
    return cross_entropy(logits, golds)
