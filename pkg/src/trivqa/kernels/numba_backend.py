"""numba-compiled loop kernels.

Mirrors numpy_backend function-for-function. Importing this module
requires numba; the package falls back to the numpy lane when it is
missing (see kernels/__init__). No fastmath and no prange anywhere:
results must be reproducible run to run on the same machine.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def relu_fwd(x):
    out = np.empty_like(x)
    xf = x.ravel()
    of = out.ravel()
    for i in range(xf.size):
        v = xf[i]
        of[i] = v if v > 0.0 else 0.0
    return out


@njit(cache=True)
def relu_bwd(x, g):
    out = np.empty_like(g)
    xf = x.ravel()
    gf = g.ravel()
    of = out.ravel()
    for i in range(xf.size):
        of[i] = gf[i] if xf[i] > 0.0 else 0.0
    return out


@njit(cache=True)
def softmax_rows_fwd(x):
    m, n = x.shape
    out = np.empty((m, n))
    for i in range(m):
        mx = x[i, 0]
        for j in range(1, n):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(n):
            e = np.exp(x[i, j] - mx)
            out[i, j] = e
            s += e
        inv = 1.0 / s
        for j in range(n):
            out[i, j] *= inv
    return out


@njit(cache=True)
def softmax_rows_bwd(p, g):
    m, n = p.shape
    out = np.empty((m, n))
    for i in range(m):
        inner = 0.0
        for j in range(n):
            inner += g[i, j] * p[i, j]
        for j in range(n):
            out[i, j] = p[i, j] * (g[i, j] - inner)
    return out


@njit(cache=True)
def ce_fwd(logits, labels):
    m, n = logits.shape
    probs = np.empty((m, n))
    total = 0.0
    for i in range(m):
        mx = logits[i, 0]
        for j in range(1, n):
            if logits[i, j] > mx:
                mx = logits[i, j]
        z = 0.0
        for j in range(n):
            e = np.exp(logits[i, j] - mx)
            probs[i, j] = e
            z += e
        inv = 1.0 / z
        for j in range(n):
            probs[i, j] *= inv
        total += np.log(z) + mx - logits[i, labels[i]]
    return total, probs


@njit(cache=True)
def ce_bwd(probs, labels, scale):
    m, n = probs.shape
    g = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            g[i, j] = probs[i, j] * scale
        g[i, labels[i]] -= scale
    return g


@njit(cache=True)
def soft_ce_fwd(logits, target):
    m, n = logits.shape
    probs = np.empty((m, n))
    total = 0.0
    for i in range(m):
        mx = logits[i, 0]
        for j in range(1, n):
            if logits[i, j] > mx:
                mx = logits[i, j]
        z = 0.0
        dot = 0.0
        for j in range(n):
            e = np.exp(logits[i, j] - mx)
            probs[i, j] = e
            z += e
            dot += target[i, j] * logits[i, j]
        inv = 1.0 / z
        for j in range(n):
            probs[i, j] *= inv
        total += np.log(z) + mx - dot
    return total, probs


@njit(cache=True)
def soft_ce_bwd(probs, target, scale):
    m, n = probs.shape
    g = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            g[i, j] = (probs[i, j] - target[i, j]) * scale
    return g


@njit(cache=True)
def sq_diff_sum(x, y):
    xf = x.ravel()
    yf = y.ravel()
    total = 0.0
    for i in range(xf.size):
        d = xf[i] - yf[i]
        total += d * d
    return total


@njit(cache=True)
def sq_diff_bwd(x, y, scale):
    out = np.empty_like(x)
    xf = x.ravel()
    yf = y.ravel()
    of = out.ravel()
    s2 = 2.0 * scale
    for i in range(xf.size):
        of[i] = (xf[i] - yf[i]) * s2
    return out


@njit(cache=True)
def add_rowvec(a, v):
    m, n = a.shape
    out = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            out[i, j] = a[i, j] + v[j]
    return out


@njit(cache=True)
def sum_rows(g):
    m, n = g.shape
    out = np.zeros(n)
    for i in range(m):
        for j in range(n):
            out[j] += g[i, j]
    return out


@njit(cache=True)
def sgd_update(p, g, v, lr, mu):
    p_new = np.empty_like(p)
    v_new = np.empty_like(v)
    pf = p.ravel()
    gf = g.ravel()
    vf = v.ravel()
    pnf = p_new.ravel()
    vnf = v_new.ravel()
    for i in range(pf.size):
        vel = mu * vf[i] + gf[i]
        vnf[i] = vel
        pnf[i] = pf[i] - lr * vel
    return p_new, v_new
