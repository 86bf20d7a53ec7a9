"""Intra-domain mixup on the modal-general features.

Partners are drawn within the sample's own domain; one lambda per pair is
shared across all modalities so the mixed label stays consistent. Mixed
rows replace the originals (batch size unchanged) and are re-normalized
because the contrastive and trunk inputs expect unit rows. Domain labels
are untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import InputError
from .model import NORM_EPS


@dataclass
class MixupConfig:
    beta_a: float = 2.0
    beta_b: float = 2.0
    enabled: bool = True

    def validate(self) -> None:
        if self.beta_a <= 0 or self.beta_b <= 0:
            raise InputError("beta shape parameters must be positive")


def mixup_pairs(domains: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Partner index j for every sample i, with domain(j) == domain(i).

    Within each domain the partners are a random permutation; if it has
    fixed points one reshuffle is attempted, after which fixed points are
    accepted (a singleton domain always pairs with itself).
    """
    domains = np.asarray(domains)
    n = domains.shape[0]
    if n < 1:
        raise InputError("mixup_pairs: empty batch")
    partner = np.empty(n, dtype=np.int64)
    for d in np.unique(domains):
        idx = np.flatnonzero(domains == d)
        perm = rng.permutation(idx)
        if len(idx) > 1 and np.any(perm == idx):
            perm = rng.permutation(idx)
        partner[idx] = perm
    return partner


def draw_lambdas(config: MixupConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.beta(config.beta_a, config.beta_b, size=n)


def mix_rows(z: np.ndarray, pairs: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Convex combination lam*z_i + (1-lam)*z_j, before re-normalization."""
    lam = np.asarray(lam, dtype=np.float64)
    if lam.min() < 0.0 or lam.max() > 1.0:
        raise InputError("mixup lambda must lie in [0, 1]")
    return lam[:, None] * z + (1.0 - lam)[:, None] * z[pairs]


def mixup_apply(z_general: dict[str, np.ndarray], labels_onehot: np.ndarray,
                pairs: np.ndarray, lambda_draws: np.ndarray):
    """Mix features and labels. Returns (mixed z_general per modality, mixed labels).

    Mixed features are re-L2-normalized; mixed label rows stay on the
    simplex by convexity.
    """
    lam = np.asarray(lambda_draws, dtype=np.float64)
    labels_onehot = np.asarray(labels_onehot, dtype=np.float64)
    if labels_onehot.ndim != 2:
        raise InputError("mixup_apply: labels must be one-hot rows")
    mixed: dict[str, np.ndarray] = {}
    for m, z in z_general.items():
        pre = mix_rows(np.asarray(z, dtype=np.float64), pairs, lam)
        mixed[m], _ = K.row_l2norm_fwd(np.ascontiguousarray(pre), NORM_EPS)
    y_bar = lam[:, None] * labels_onehot + (1.0 - lam)[:, None] * labels_onehot[pairs]
    return mixed, y_bar
