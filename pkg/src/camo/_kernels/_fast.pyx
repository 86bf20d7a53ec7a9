# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Same contract as py_kernels; see that module for docs.

Each function fuses what numpy would do in several array passes into one
C loop. Matmuls stay in BLAS on the caller side.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()

BACKEND_NAME = "cython"


def relu_fwd(cnp.ndarray[cnp.float64_t, ndim=2] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y = np.empty((n, d))
    cdef double v
    for i in range(n):
        for j in range(d):
            v = x[i, j]
            y[i, j] = v if v > 0.0 else 0.0
    return y


def relu_bwd(cnp.ndarray[cnp.float64_t, ndim=2] x,
             cnp.ndarray[cnp.float64_t, ndim=2] dy):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dx = np.empty((n, d))
    for i in range(n):
        for j in range(d):
            dx[i, j] = dy[i, j] if x[i, j] > 0.0 else 0.0
    return dx


def softmax_xent_hard(cnp.ndarray[cnp.float64_t, ndim=2] logits,
                      cnp.ndarray[cnp.int64_t, ndim=1] targets):
    cdef Py_ssize_t n = logits.shape[0], k = logits.shape[1], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] probs = np.empty((n, k))
    cdef double m, s, loss = 0.0
    for i in range(n):
        m = logits[i, 0]
        for j in range(1, k):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(k):
            probs[i, j] = exp(logits[i, j] - m)
            s += probs[i, j]
        for j in range(k):
            probs[i, j] /= s
        loss -= (logits[i, targets[i]] - m) - log(s)
    return loss / n, probs


def softmax_xent_soft(cnp.ndarray[cnp.float64_t, ndim=2] logits,
                      cnp.ndarray[cnp.float64_t, ndim=2] targets):
    cdef Py_ssize_t n = logits.shape[0], k = logits.shape[1], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] probs = np.empty((n, k))
    cdef double m, s, logs, loss = 0.0
    for i in range(n):
        m = logits[i, 0]
        for j in range(1, k):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(k):
            probs[i, j] = exp(logits[i, j] - m)
            s += probs[i, j]
        logs = log(s)
        for j in range(k):
            probs[i, j] /= s
            loss -= targets[i, j] * ((logits[i, j] - m) - logs)
    return loss / n, probs


def row_l2norm_fwd(cnp.ndarray[cnp.float64_t, ndim=2] x, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y = np.empty((n, d))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] norms = np.empty(n)
    cdef double s, scale
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += x[i, j] * x[i, j]
        s = sqrt(s)
        norms[i] = s
        scale = s if s >= eps else 1.0
        for j in range(d):
            y[i, j] = x[i, j] / scale
    return y, norms


def row_l2norm_bwd(cnp.ndarray[cnp.float64_t, ndim=2] y,
                   cnp.ndarray[cnp.float64_t, ndim=1] norms,
                   cnp.ndarray[cnp.float64_t, ndim=2] dy, double eps):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dx = np.empty((n, d))
    cdef double proj
    for i in range(n):
        if norms[i] >= eps:
            proj = 0.0
            for j in range(d):
                proj += y[i, j] * dy[i, j]
            for j in range(d):
                dx[i, j] = (dy[i, j] - y[i, j] * proj) / norms[i]
        else:
            for j in range(d):
                dx[i, j] = dy[i, j]
    return dx


def supcon_core(cnp.ndarray[cnp.float64_t, ndim=2] s,
                cnp.ndarray[cnp.int64_t, ndim=1] labels):
    cdef Py_ssize_t n = s.shape[0], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ds = np.zeros((n, n))
    cdef cnp.ndarray[cnp.int64_t, ndim=1] npos = np.zeros(n, dtype=np.int64)
    cdef double m, denom, lse, pos_sum, loss = 0.0
    cdef double inv_npos
    for i in range(n):
        for j in range(n):
            if j != i and labels[j] == labels[i]:
                npos[i] += 1
    for i in range(n):
        if npos[i] == 0:
            continue
        m = -np.inf
        for j in range(n):
            if j != i and s[i, j] > m:
                m = s[i, j]
        denom = 0.0
        pos_sum = 0.0
        for j in range(n):
            if j == i:
                continue
            denom += exp(s[i, j] - m)
            if labels[j] == labels[i]:
                pos_sum += s[i, j]
        lse = m + log(denom)
        loss -= (pos_sum - npos[i] * lse) / npos[i]
        inv_npos = 1.0 / npos[i]
        for j in range(n):
            if j == i:
                continue
            ds[i, j] = exp(s[i, j] - m) / denom
            if labels[j] == labels[i]:
                ds[i, j] -= inv_npos
    return loss, ds


def adam_step(cnp.ndarray[cnp.float64_t, ndim=1] p,
              cnp.ndarray[cnp.float64_t, ndim=1] g,
              cnp.ndarray[cnp.float64_t, ndim=1] m,
              cnp.ndarray[cnp.float64_t, ndim=1] v,
              double lr, double beta1, double beta2, double eps,
              double c1, double c2):
    cdef Py_ssize_t n = p.shape[0], i
    cdef double gi
    for i in range(n):
        gi = g[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
        p[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)
