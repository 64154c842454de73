"""Parameter initializers."""

import numpy as np

from depfuse.nn.tensor import Parameter


def glorot(rng, shape, name):
    fan_out, fan_in = shape[0], shape[-1] if len(shape) > 1 else 1
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Parameter(rng.uniform(-bound, bound, size=shape), name, weight_decay_eligible=True)


def zeros(shape, name):
    return Parameter(np.zeros(shape), name, weight_decay_eligible=False)


def small_normal(rng, shape, name, std=0.02):
    return Parameter(rng.normal(0.0, std, size=shape), name, weight_decay_eligible=False)
