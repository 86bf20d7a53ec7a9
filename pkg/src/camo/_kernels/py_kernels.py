"""Pure-numpy implementations of the hot kernels.

These are the fallback for the compiled module in `_fast.pyx`; both expose
the same eight functions and must agree to rounding error. Dense matmuls
are deliberately NOT here: both backends leave those to BLAS.

All arrays are float64 and C-contiguous unless noted.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(x, dy):
    """Gradient through relu given the pre-activation `x`."""
    return np.where(x > 0.0, dy, 0.0)


def softmax_xent_hard(logits, targets):
    """Mean cross-entropy of softmax(logits) against integer targets.

    Returns (loss, probs); the gradient of the mean loss w.r.t. logits is
    (probs - onehot(targets)) / N, assembled by the caller.
    """
    n = logits.shape[0]
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    e = np.exp(shifted)
    denom = e.sum(axis=1, keepdims=True)
    probs = e / denom
    logp = shifted - np.log(denom)
    loss = -logp[np.arange(n), targets].sum() / n
    return float(loss), probs


def softmax_xent_soft(logits, targets):
    """Mean cross-entropy against row-stochastic soft targets."""
    n = logits.shape[0]
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    e = np.exp(shifted)
    denom = e.sum(axis=1, keepdims=True)
    probs = e / denom
    logp = shifted - np.log(denom)
    loss = -(targets * logp).sum() / n
    return float(loss), probs


def row_l2norm_fwd(x, eps):
    """Row-wise L2 normalization. Rows with norm < eps pass through unchanged
    (so the all-zero row stays the zero vector). Returns (y, norms)."""
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    safe = norms >= eps
    scale = np.where(safe, norms, 1.0)
    return x / scale[:, None], norms


def row_l2norm_bwd(y, norms, dy, eps):
    """Gradient through row_l2norm_fwd; rows below the guard are identity."""
    safe = norms >= eps
    scale = np.where(safe, norms, 1.0)
    proj = np.einsum("ij,ij->i", y, dy)
    dx = (dy - y * proj[:, None]) / scale[:, None]
    return np.where(safe[:, None], dx, dy)


def supcon_core(s, labels):
    """Loss and gradient of the supervised contrastive objective given the
    pre-scaled similarity matrix s = (z @ z.T) / tau.

    For each anchor i the candidate set is every other row; positives are
    rows sharing the label. Anchors without positives contribute nothing.
    Returns (loss, ds) with ds = dLoss/ds (zero diagonal); the caller maps
    ds back to dz via (ds + ds.T) @ z / tau.
    """
    n = s.shape[0]
    pos = labels[:, None] == labels[None, :]
    np.fill_diagonal(pos, False)
    npos = pos.sum(axis=1)
    active = npos > 0
    npos_safe = np.maximum(npos, 1)

    s_off = s.copy()
    np.fill_diagonal(s_off, -np.inf)
    m = s_off.max(axis=1)
    e = np.exp(s_off - m[:, None])  # diagonal becomes exp(-inf) = 0
    denom = e.sum(axis=1)
    lse = m + np.log(denom)
    q = e / denom[:, None]

    pos_sum = np.where(pos, s, 0.0).sum(axis=1)
    per_anchor = -(pos_sum - npos * lse) / npos_safe
    loss = float(per_anchor[active].sum())

    ds = (q - pos / npos_safe[:, None]) * active[:, None]
    return loss, ds


def adam_step(p, g, m, v, lr, beta1, beta2, eps, c1, c2):
    """One fused Adam update, in place on flat float64 views.

    c1, c2 are the bias corrections 1 - beta1**t and 1 - beta2**t.
    """
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
