"""Adam over a named subset of model parameters.

The trainer keeps two instances, one for the discriminator and one for
everything else; each only ever touches its own subset, which is what the
alternating freeze relies on.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as K


class Adam:
    def __init__(self, param_names, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.param_names = list(param_names)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name in self.param_names:
            g = grads[name]
            p = params[name]
            if name not in self._m:
                self._m[name] = np.zeros(p.size)
                self._v[name] = np.zeros(p.size)
            K.adam_step(p.reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
                        self._m[name], self._v[name],
                        lr, self.beta1, self.beta2, self.eps, c1, c2)
