"""Dense tensors with reverse-mode differentiation, optimizer and gradient oracle."""

from depfuse.nn.tensor import (
    Parameter,
    Tensor,
    add,
    backward,
    concat,
    cross_entropy,
    dropout,
    embedding_lookup,
    leaky_relu,
    masked_softmax,
    matmul,
    mean_rows,
    mul,
    neighbor_sum,
    relu,
    reshape,
    softmax,
    sub,
    transpose,
    tsum,
)
from depfuse.nn.optim import AdamW, adamw_step
from depfuse.nn.gradcheck import finite_difference_gradients, relative_error

__all__ = [
    "AdamW", "Parameter", "Tensor", "adamw_step", "add", "backward", "concat",
    "cross_entropy", "dropout", "embedding_lookup", "finite_difference_gradients",
    "leaky_relu", "masked_softmax", "matmul", "mean_rows", "mul", "neighbor_sum",
    "relative_error", "relu", "reshape", "softmax", "sub", "transpose", "tsum",
]
