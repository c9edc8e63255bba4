"""AdamW with decoupled weight decay."""

import numpy as np

from .. import kernels
from ..errors import ConfigError
from .tensor import Tensor


class AdamW:
    """Bias-corrected Adam plus decoupled decay (p *= 1 - lr*wd first).

    `params` is an ordered name -> Tensor mapping; moments are allocated
    per parameter and the update runs through the kernel backend.
    """

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999,
                 eps=1e-8, weight_decay=0.01):
        # lr=0 is legal: a no-op update (modulo decay, also scaled by lr)
        if lr < 0 or not 0 <= beta1 < 1 or not 0 <= beta2 < 1 or eps <= 0:
            raise ConfigError("bad AdamW hyperparameters")
        if weight_decay < 0:
            raise ConfigError(f"negative weight decay {weight_decay}")
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self._m = {n: np.zeros_like(t.data).ravel() for n, t in self.params.items()}
        self._v = {n: np.zeros_like(t.data).ravel() for n, t in self.params.items()}

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def step(self) -> None:
        self.step_count += 1
        for name, t in self.params.items():
            if t.grad is None:
                continue  # disconnected parameter: left untouched
            if not t.data.flags.c_contiguous:
                raise ConfigError(f"parameter {name} is not contiguous")
            g = np.ascontiguousarray(t.grad, dtype=t.data.dtype).ravel()
            p = t.data.ravel()  # guaranteed view of t.data
            kernels.adamw_update(
                p, g, self._m[name], self._v[name], self.step_count,
                self.lr, self.beta1, self.beta2, self.eps, self.weight_decay,
            )

    def hyperparams(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
        }
