"""Adam with per-parameter learning-rate scaling."""

import numpy as np


class Adam:
    def __init__(self, params, lr=1e-2, betas=(0.9, 0.99), eps=1e-15):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names: {sorted(names)}")
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.step_count = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.step_count += 1
        c1 = 1.0 - self.beta1**self.step_count
        c2 = 1.0 - self.beta2**self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / c1
            vhat = v / c2
            p.value -= (self.lr * p.lr_scale) * mhat / (np.sqrt(vhat) + self.eps)

    def state_arrays(self):
        """Flat name -> array map for checkpointing (moments + step count)."""
        out = {"adam/step": np.array([self.step_count], dtype=np.int64)}
        for p, m, v in zip(self.params, self.m, self.v):
            out[f"adam/m/{p.name}"] = m
            out[f"adam/v/{p.name}"] = v
        return out

    def load_state_arrays(self, arrays):
        self.step_count = int(arrays["adam/step"][0])
        for i, p in enumerate(self.params):
            for tag, buf in (("m", self.m[i]), ("v", self.v[i])):
                src = arrays[f"adam/{tag}/{p.name}"]
                if src.shape != buf.shape:
                    raise ValueError(f"adam state shape mismatch for {p.name}")
                buf[:] = src
