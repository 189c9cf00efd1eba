"""Small dense networks with explicit forward/backward passes."""

import numpy as np

from .params import Parameter


def relu(x):
    return np.maximum(x, 0)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    # log(1 + e^x), stable on both tails
    return np.logaddexp(0.0, x).astype(x.dtype, copy=False)


class FieldMLP:
    """One hidden ReLU layer; the default width is 32 everywhere in the field."""

    def __init__(self, in_dim, out_dim, hidden=32, dtype=np.float32, rng=None, name="mlp", zero_init=False):
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.hidden = int(hidden)
        self.dtype = np.dtype(dtype)
        if rng is None:
            rng = np.random.default_rng(0)
        if zero_init:
            w1 = np.zeros((in_dim, hidden))
            w2 = np.zeros((hidden, out_dim))
        else:
            w1 = rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(in_dim, hidden))
            w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), size=(hidden, out_dim))
        self.w1 = Parameter(w1.astype(self.dtype), name=f"{name}.w1")
        self.b1 = Parameter(np.zeros(hidden, dtype=self.dtype), name=f"{name}.b1")
        self.w2 = Parameter(w2.astype(self.dtype), name=f"{name}.w2")
        self.b2 = Parameter(np.zeros(out_dim, dtype=self.dtype), name=f"{name}.b2")

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2]

    @property
    def n_params(self):
        return self.in_dim * self.hidden + self.hidden + self.hidden * self.out_dim + self.out_dim

    def forward(self, x):
        h = x @ self.w1.value + self.b1.value
        a = relu(h)
        y = a @ self.w2.value + self.b2.value
        return y, (x, a)

    def backward(self, ctx, dy):
        x, a = ctx
        dy = np.ascontiguousarray(dy, dtype=self.dtype)
        self.w2.grad += a.T @ dy
        self.b2.grad += dy.sum(axis=0)
        da = dy @ self.w2.value.T
        da *= a > 0
        self.w1.grad += x.T @ da
        self.b1.grad += da.sum(axis=0)
        return da @ self.w1.value.T
