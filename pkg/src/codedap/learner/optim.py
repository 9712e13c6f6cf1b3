"""First-order optimizers over dicts of arrays (updated in place)."""

import numpy as np


class SGD:
    name = "sgd"

    def __init__(self, learning_rate=1e-3, rates=None):
        self.learning_rate = learning_rate
        self.rates = dict(rates or {})
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for k, g in grads.items():
            lr = self.rates.get(k, self.learning_rate)
            params[k] -= (lr * g).astype(params[k].dtype, copy=False)

    def state_arrays(self):
        return {}

    def load_state(self, t, arrays):
        self.t = int(t)


class Adam:
    name = "adam"

    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, rates=None):
        self.learning_rate = learning_rate
        self.rates = dict(rates or {})
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m, self.v = {}, {}

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correction = np.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for k, g in grads.items():
            lr_t = self.rates.get(k, self.learning_rate) * correction
            g = g.astype(params[k].dtype, copy=False)
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            params[k] -= (lr_t * m / (np.sqrt(v) + self.eps)).astype(params[k].dtype, copy=False)

    def state_arrays(self):
        out = {f"m/{k}": v for k, v in self.m.items()}
        out.update({f"v/{k}": v for k, v in self.v.items()})
        return out

    def load_state(self, t, arrays):
        self.t = int(t)
        self.m = {k[2:]: np.array(v) for k, v in arrays.items() if k.startswith("m/")}
        self.v = {k[2:]: np.array(v) for k, v in arrays.items() if k.startswith("v/")}


def make_optimizer(name, learning_rate, rates=None):
    """``rates`` maps parameter names to their own learning rates."""
    if name == "adam":
        return Adam(learning_rate, rates=rates)
    if name == "sgd":
        return SGD(learning_rate, rates=rates)
    raise ValueError(f"unknown optimizer {name!r}; expected 'adam' or 'sgd'")
