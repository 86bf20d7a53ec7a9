"""Closed-form training schedules.

The reversal multiplier ramps from 0 to gamma_max over the first
gamma_ramp_iters steps along a half-cosine and then stays flat; the
learning rate anneals from lr_init to lr_final over the whole run along
the complementary half-cosine.
"""

from __future__ import annotations

import math


def gamma_schedule(iteration: int, gamma_max: float, ramp_iters: int) -> float:
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    t = min(iteration, ramp_iters)
    return gamma_max * (1.0 - math.cos(math.pi * t / ramp_iters)) / 2.0


def lr_schedule(iteration: int, lr_init: float, lr_final: float, total_iters: int) -> float:
    if not 0 <= iteration <= total_iters:
        raise ValueError("iteration outside [0, total_iterations]")
    if total_iters == 0:
        return lr_init
    return lr_final + (lr_init - lr_final) * (1.0 + math.cos(math.pi * iteration / total_iters)) / 2.0
