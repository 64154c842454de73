"""Central finite differences, used as an independent gradient oracle."""

from __future__ import annotations

import numpy as np

EPSILON = 1e-5


def finite_difference_gradients(loss_fn, params, epsilon: float = EPSILON):
    """Numeric d loss / d param for each parameter array, coordinate by coordinate.

    ``loss_fn`` takes no arguments and returns a float; it must be
    deterministic. Parameters are perturbed in place and restored.
    """
    out = []
    for p in params:
        arr = p.data if hasattr(p, "data") else p
        grad = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + epsilon
            f_plus = float(loss_fn())
            arr[idx] = orig - epsilon
            f_minus = float(loss_fn())
            arr[idx] = orig
            grad[idx] = (f_plus - f_minus) / (2.0 * epsilon)
        out.append(grad)
    return out


def relative_error(analytic, numeric) -> float:
    """max |a - n| / max(1, |a|, |n|) over all coordinates."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
