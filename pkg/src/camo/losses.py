"""Training objectives.

Each loss is a standalone function over plain arrays so it can be checked
against brute-force scalar oracles. The *_grad variants return the loss
together with analytic gradients w.r.t. their array inputs; those gradients
are finite-difference tested.

Gradient-reversal convention for the adversarial term of task_loss: the
VALUE is class-CE + gamma * domain-CE, while the gradient routed upstream
through the causal feature is class-CE' minus gamma * domain-CE'. The
multiplier appears once (+gamma in the value, -gamma in the backward), so
minimizing the composite maximizes domain confusion.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import InputError

logger = logging.getLogger("camo")

COS_EPS = 1e-8
SUPCON_NORM_TOL = 1e-3


@dataclass
class LossWeights:
    """Composite weights, contrastive temperature, and the per-step GRL
    multiplier supplied by the schedule."""

    alpha1: float = 1.0
    alpha2: float = 3.0
    alpha3: float = 1.0
    tau: float = 0.7
    gamma: float = 0.0

    def validate(self) -> None:
        if self.tau <= 0:
            raise InputError("tau must be positive")
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise InputError("loss weights must be non-negative")
        if self.gamma < 0:
            raise InputError("gamma must be non-negative")


@dataclass
class BatchTensors:
    """Forward activations of one batch, as consumed by the step losses."""

    z_general: dict[str, np.ndarray]
    z_specific: dict[str, np.ndarray]
    x_c: np.ndarray
    x_s: np.ndarray
    labels: np.ndarray  # (N,) int or (N, C) soft rows
    domains: np.ndarray

    def validate(self) -> None:
        n = self.x_c.shape[0]
        parts = list(self.z_general.values()) + list(self.z_specific.values())
        if any(a.shape[0] != n for a in parts) or self.x_s.shape[0] != n \
                or self.labels.shape[0] != n or self.domains.shape[0] != n:
            raise InputError("batch fields disagree on N")
        if self.labels.ndim == 2:
            sums = self.labels.sum(axis=1)
            if np.abs(sums - 1.0).max() > 1e-6:
                raise InputError("soft label rows must sum to 1")


def _check_targets(logits: np.ndarray, targets: np.ndarray, what: str) -> None:
    if logits.ndim != 2:
        raise InputError(f"{what}: logits must be 2-D")
    if logits.shape[0] < 1:
        raise InputError(f"{what}: empty batch")
    if targets.shape[0] != logits.shape[0]:
        raise InputError(f"{what}: batch size mismatch")
    if targets.ndim == 1:
        if targets.min() < 0 or targets.max() >= logits.shape[1]:
            raise InputError(f"{what}: target index out of range")
    elif targets.shape[1] != logits.shape[1]:
        raise InputError(f"{what}: soft target width mismatch")


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean softmax cross-entropy; targets are class indices or soft rows."""
    loss, _ = _xent(logits, targets)
    return loss


def cross_entropy_grad(logits: np.ndarray, targets: np.ndarray):
    """Returns (loss, dloss/dlogits) for the mean cross-entropy."""
    loss, probs = _xent(logits, targets)
    n, c = logits.shape
    if targets.ndim == 1:
        t = np.zeros((n, c))
        t[np.arange(n), targets] = 1.0
    else:
        t = np.asarray(targets, dtype=np.float64)
    return loss, (probs - t) / n


def _xent(logits, targets):
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    targets = np.asarray(targets)
    _check_targets(logits, targets, "cross_entropy")
    if targets.ndim == 1:
        return K.softmax_xent_hard(logits, np.ascontiguousarray(targets, dtype=np.int64))
    return K.softmax_xent_soft(logits, np.ascontiguousarray(targets, dtype=np.float64))


# ---------------------------------------------------------------------------
# discriminator / task
# ---------------------------------------------------------------------------

def disc_loss(domain_logits: np.ndarray, domains: np.ndarray) -> float:
    """Mean cross-entropy of the domain discriminator."""
    return cross_entropy(domain_logits, np.asarray(domains))


def disc_loss_grad(domain_logits: np.ndarray, domains: np.ndarray):
    return cross_entropy_grad(domain_logits, np.asarray(domains))


def task_loss(class_logits: np.ndarray, labels: np.ndarray,
              domain_logits: np.ndarray, domains: np.ndarray, gamma: float) -> float:
    """Classification CE plus gamma-weighted adversarial domain CE.

    domain_logits are understood to sit behind a gradient-reversal layer;
    this function only reports the composite value.
    """
    if gamma < 0:
        raise InputError("gamma must be non-negative")
    if class_logits.shape[0] != domain_logits.shape[0]:
        raise InputError("task_loss: batch size mismatch between heads")
    return cross_entropy(class_logits, labels) + gamma * cross_entropy(domain_logits, np.asarray(domains))


def task_loss_grad(class_logits: np.ndarray, labels: np.ndarray,
                   domain_logits: np.ndarray, domains: np.ndarray, gamma: float):
    """Returns (value, d_class_logits, d_domain_logits).

    d_domain_logits is the gradient of the UNWEIGHTED domain CE; callers
    route it upstream through grad_reverse_backward (factor -gamma), which
    realizes the reversal contract. The discriminator itself is frozen
    during the step that uses this loss.
    """
    if gamma < 0:
        raise InputError("gamma must be non-negative")
    if class_logits.shape[0] != domain_logits.shape[0]:
        raise InputError("task_loss: batch size mismatch between heads")
    ce_cls, d_cls = cross_entropy_grad(class_logits, labels)
    ce_dom, d_dom = cross_entropy_grad(domain_logits, np.asarray(domains))
    return ce_cls + gamma * ce_dom, d_cls, d_dom


# ---------------------------------------------------------------------------
# supervised contrastive
# ---------------------------------------------------------------------------

def _supcon_check(z: np.ndarray, labels: np.ndarray, tau: float):
    z = np.ascontiguousarray(z, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if tau <= 0:
        raise InputError("tau must be positive")
    if z.ndim != 2 or z.shape[0] != labels.shape[0]:
        raise InputError("supcon_loss: rows/labels mismatch")
    if z.shape[0] < 2:
        raise InputError("supcon_loss: need at least two rows")
    norms = np.sqrt(np.einsum("ij,ij->i", z, z))
    if np.abs(norms - 1.0).max() > SUPCON_NORM_TOL:
        raise InputError("supcon_loss: rows must be L2-normalized")
    return z, labels


def supcon_loss(z: np.ndarray, labels: np.ndarray, tau: float) -> float:
    """Supervised contrastive loss over the stacked per-modality rows.

    Sum over anchors of -1/|P(i)| * sum_{p in P(i)} log of the softmax (at
    temperature tau) of z_i . z_p against all other rows. Anchors with no
    positive are skipped.
    """
    z, labels = _supcon_check(z, labels, tau)
    s = (z @ z.T) / tau
    loss, _ = K.supcon_core(np.ascontiguousarray(s), labels)
    return float(loss)


def supcon_loss_grad(z: np.ndarray, labels: np.ndarray, tau: float):
    """Returns (loss, dloss/dz) with z the normalized rows."""
    z, labels = _supcon_check(z, labels, tau)
    s = (z @ z.T) / tau
    loss, ds = K.supcon_core(np.ascontiguousarray(s), labels)
    dz = (ds + ds.T) @ z / tau
    return float(loss), dz


# ---------------------------------------------------------------------------
# orthogonality
# ---------------------------------------------------------------------------

def _cos_rows(a: np.ndarray, b: np.ndarray):
    """Row-wise cosine; rows where either side has near-zero norm contribute 0."""
    na = np.sqrt(np.einsum("ij,ij->i", a, a))
    nb = np.sqrt(np.einsum("ij,ij->i", b, b))
    ok = (na >= COS_EPS) & (nb >= COS_EPS)
    if not ok.all():
        logger.warning("ortho_loss: %d zero-norm row(s) contribute 0", int((~ok).sum()))
    denom = np.where(ok, na * nb, 1.0)
    cos = np.where(ok, np.einsum("ij,ij->i", a, b) / denom, 0.0)
    return cos, na, nb, ok


def _cos_rows_grad(a, b, cos, na, nb, ok, coeff):
    """Gradients of coeff * sum_i cos_i w.r.t. a and b (zero on guarded rows)."""
    safe_a = np.where(ok, na, 1.0)
    safe_b = np.where(ok, nb, 1.0)
    sa = np.where(ok, 1.0 / (safe_a * safe_b), 0.0)[:, None]
    ca = np.where(ok, cos / (safe_a * safe_a), 0.0)[:, None]
    cb = np.where(ok, cos / (safe_b * safe_b), 0.0)[:, None]
    da = coeff * (b * sa - a * ca)
    db = coeff * (a * sa - b * cb)
    return da, db


def ortho_loss(x_c: np.ndarray, x_s: np.ndarray,
               z_general: dict[str, np.ndarray], z_specific: dict[str, np.ndarray],
               include_domain: bool = True, include_modal: bool = True) -> float:
    """Batch mean of cos(x_c, x_s) plus the per-modality cos(z, z~) terms.

    The include flags exist for the ablation axes; the full objective uses
    both parts.
    """
    value, _ = _ortho(x_c, x_s, z_general, z_specific, include_domain, include_modal, grad=False)
    return value


def ortho_loss_grad(x_c: np.ndarray, x_s: np.ndarray,
                    z_general: dict[str, np.ndarray], z_specific: dict[str, np.ndarray],
                    include_domain: bool = True, include_modal: bool = True):
    """Returns (value, dict of gradients keyed x_c, x_s, z_general.<m>, z_specific.<m>)."""
    return _ortho(x_c, x_s, z_general, z_specific, include_domain, include_modal, grad=True)


def _ortho(x_c, x_s, z_general, z_specific, include_domain, include_modal, grad):
    x_c = np.asarray(x_c, dtype=np.float64)
    x_s = np.asarray(x_s, dtype=np.float64)
    if x_c.shape != x_s.shape:
        raise InputError("ortho_loss: x_c and x_s must share a shape")
    n = x_c.shape[0]
    if n < 1:
        raise InputError("ortho_loss: empty batch")
    total = 0.0
    grads: dict[str, np.ndarray] = {}
    if include_domain:
        cos, na, nb, ok = _cos_rows(x_c, x_s)
        total += cos.sum()
        if grad:
            da, db = _cos_rows_grad(x_c, x_s, cos, na, nb, ok, 1.0 / n)
            grads["x_c"] = da
            grads["x_s"] = db
    if include_modal:
        for m in sorted(z_general):
            zg = np.asarray(z_general[m], dtype=np.float64)
            zs = np.asarray(z_specific[m], dtype=np.float64)
            if zs.shape[1] == 0:
                continue  # no modal-specific half (unsplit projection)
            if zg.shape != zs.shape or zg.shape[0] != n:
                raise InputError(f"ortho_loss: shape mismatch for modality {m!r}")
            cos, na, nb, ok = _cos_rows(zg, zs)
            total += cos.sum()
            if grad:
                da, db = _cos_rows_grad(zg, zs, cos, na, nb, ok, 1.0 / n)
                grads[f"z_general.{m}"] = da
                grads[f"z_specific.{m}"] = db
    return float(total / n), grads


# ---------------------------------------------------------------------------
# composite
# ---------------------------------------------------------------------------

def step2_loss(task: float, supcon: float, ortho: float, weights: LossWeights) -> float:
    """Weighted sum of the task, contrastive, and orthogonality components."""
    return weights.alpha1 * task + weights.alpha2 * supcon + weights.alpha3 * ortho
