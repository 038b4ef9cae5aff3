"""Vectorized numpy implementations of the hot kernels.

This is the fallback lane: it must give the same results as the numba
lane (up to floating-point summation order) with no compilation step.
All kernels take and return float64 C-contiguous arrays and do no shape
checking; callers validate shapes before dispatch.

Matrix products are deliberately not kernels. Both lanes route matmul
through numpy's BLAS, which beats any loop nest we could compile here.
"""

import numpy as np


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(x, g):
    return np.where(x > 0.0, g, 0.0)


def softmax_rows_fwd(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_bwd(p, g):
    inner = (g * p).sum(axis=1, keepdims=True)
    return p * (g - inner)


def ce_fwd(logits, labels):
    """Cross entropy against integer labels.

    Returns (sum of per-row losses, softmax probabilities). The caller
    applies the 1/m mean so that sum-vs-mean policy lives in one place.
    """
    m = logits.shape[0]
    mx = logits.max(axis=1)
    e = np.exp(logits - mx[:, None])
    z = e.sum(axis=1)
    probs = e / z[:, None]
    picked = logits[np.arange(m), labels]
    losses = np.log(z) + mx - picked
    return float(losses.sum()), probs


def ce_bwd(probs, labels, scale):
    g = probs.copy()
    g[np.arange(probs.shape[0]), labels] -= 1.0
    g *= scale
    return g


def soft_ce_fwd(logits, target):
    """Cross entropy against a fixed probability-row target."""
    mx = logits.max(axis=1)
    e = np.exp(logits - mx[:, None])
    z = e.sum(axis=1)
    probs = e / z[:, None]
    losses = np.log(z) + mx - (target * logits).sum(axis=1)
    return float(losses.sum()), probs


def soft_ce_bwd(probs, target, scale):
    return (probs - target) * scale


def sq_diff_sum(x, y):
    d = x - y
    return float((d * d).sum())


def sq_diff_bwd(x, y, scale):
    return (x - y) * (2.0 * scale)


def add_rowvec(a, v):
    return a + v


def sum_rows(g):
    return np.ascontiguousarray(g.sum(axis=0))


def sgd_update(p, g, v, lr, mu):
    """One heavy-ball step. Returns (new_param, new_velocity)."""
    v_new = mu * v + g
    p_new = p - lr * v_new
    return p_new, v_new
