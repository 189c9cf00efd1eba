"""Leaf parameters for hand-rolled reverse-mode gradients.

A ``Parameter`` is a named numpy array plus an accumulator for its gradient.
Modules own Parameters; forward passes stash whatever they need for the
backward pass in lightweight context objects, and backward passes add into
``param.grad``.  There is no graph — composition order is explicit in the
calling code, which keeps reductions ordered and runs bit-reproducible.
"""

import numpy as np


class Parameter:
    __slots__ = ("name", "value", "grad", "lr_scale")

    def __init__(self, value, name="", lr_scale=1.0):
        self.value = np.ascontiguousarray(value)
        self.grad = np.zeros_like(self.value)
        self.name = name
        self.lr_scale = float(lr_scale)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    @property
    def dtype(self):
        return self.value.dtype

    def zero_grad(self):
        self.grad.fill(0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape}, dtype={self.value.dtype})"


def zero_grads(params):
    for p in params:
        p.zero_grad()


def grad_norm(params):
    total = 0.0
    for p in params:
        g = p.grad.ravel()
        total += float(np.dot(g, g))
    return float(np.sqrt(total))


def n_params(params):
    return sum(p.size for p in params)
