"""Compiled NUTS transition for a single neuron's (kappa, zeta) block.

Same algorithm as :func:`bnnsv.hmc.nuts_draw` (multinomial sampling,
generalised U-turn check, divergence at an energy error of 1000) with the
neuron log density inlined.  Random numbers come from numba's internal
generator, seeded once per transition so chains stay reproducible.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_DIVERGENCE = 1000.0


@njit(cache=True)
def _act(kind, z):
    if kind == 1:
        return (0.01 * z, 0.01) if z < 0 else (z, 1.0)
    if kind == 2:
        if z >= 0:
            s = 1.0 / (1.0 + math.exp(-z))
        else:
            e = math.exp(z)
            s = e / (1.0 + e)
        return s, s * (1.0 - s)
    if kind == 3:
        return (0.0, 0.0) if z < 0 else (z, 1.0)
    t = math.tanh(z)
    return t, 1.0 - t * t


@njit(cache=True)
def logp_grad(u, scale, X, resid, w, prec, kind, beta):
    """Log density and gradient in the scaled coordinates ``u = theta / scale``."""
    T, K = X.shape
    theta = u * scale
    grad = np.zeros(K + 1)
    lp = 0.0
    for t in range(T):
        z = theta[K]
        for j in range(K):
            z += X[t, j] * theta[j]
        h, dh = _act(kind, z)
        r = resid[t] - beta * h
        lp -= 0.5 * w[t] * r * r
        v = w[t] * r * beta * dh
        for j in range(K):
            grad[j] += X[t, j] * v
        grad[K] += v
    for j in range(K + 1):
        lp -= 0.5 * prec[j] * theta[j] * theta[j]
        grad[j] = (grad[j] - prec[j] * theta[j]) * scale[j]
    return lp, grad


@njit(cache=True)
def _leaf(q, p, g, eps, scale, X, resid, w, prec, kind, beta):
    n = q.shape[0]
    p1 = np.empty(n)
    q1 = np.empty(n)
    for i in range(n):
        p1[i] = p[i] + 0.5 * eps * g[i]
        q1[i] = q[i] + eps * p1[i]
    lp, g1 = logp_grad(q1, scale, X, resid, w, prec, kind, beta)
    for i in range(n):
        p1[i] += 0.5 * eps * g1[i]
    return q1, p1, g1, lp


@njit(cache=True)
def _uturn(p_sum, p_minus, p_plus):
    return np.dot(p_sum, p_minus) <= 0.0 or np.dot(p_sum, p_plus) <= 0.0


@njit(cache=True)
def _logaddexp(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    m = max(a, b)
    return m + math.log(math.exp(a - m) + math.exp(b - m))


@njit(cache=True)
def _build(q, p, g, direction, depth, eps, H0, scale, X, resid, w, prec, kind, beta):
    # Returns (q_minus, p_minus, g_minus, q_plus, p_plus, g_plus, proposal,
    #          log_weight, p_sum, stop, divergent, accept_sum, n_leapfrog).
    if depth == 0:
        q1, p1, g1, lp1 = _leaf(q, p, g, direction * eps, scale, X, resid, w, prec, kind, beta)
        H = -lp1 + 0.5 * np.dot(p1, p1)
        bad = not (math.isfinite(H) and math.isfinite(np.dot(g1, g1)))
        divergent = bad or (H - H0) > _DIVERGENCE
        log_w = -np.inf if bad else -H
        acc = 0.0 if bad else min(1.0, math.exp(min(0.0, H0 - H)))
        return (q1, p1, g1, q1, p1, g1, q1, log_w, p1.copy(), divergent, divergent, acc, 1)

    (qm, pm, gm, qp, pp, gp, prop, lw, ps, stop, div, acc, nl) = _build(
        q, p, g, direction, depth - 1, eps, H0, scale, X, resid, w, prec, kind, beta)
    if stop:
        return (qm, pm, gm, qp, pp, gp, prop, lw, ps, stop, div, acc, nl)
    if direction > 0:
        o = _build(qp, pp, gp, direction, depth - 1, eps, H0, scale, X, resid, w, prec, kind, beta)
    else:
        o = _build(qm, pm, gm, direction, depth - 1, eps, H0, scale, X, resid, w, prec, kind, beta)
    acc += o[11]
    nl += o[12]
    if o[9]:
        return (qm, pm, gm, qp, pp, gp, prop, lw, ps, True, div or o[10], acc, nl)
    total = _logaddexp(lw, o[7])
    if math.log(np.random.random()) < o[7] - total:
        prop = o[6]
    if direction > 0:
        qp, pp, gp = o[3], o[4], o[5]
    else:
        qm, pm, gm = o[0], o[1], o[2]
    ps = ps + o[8]
    return (qm, pm, gm, qp, pp, gp, prop, total, ps, _uturn(ps, pm, pp), div, acc, nl)


@njit(cache=True)
def find_step_size(q, scale, X, resid, w, prec, kind, beta, eps):
    lp, g = logp_grad(q, scale, X, resid, w, prec, kind, beta)
    n = q.shape[0]
    p = np.empty(n)
    for i in range(n):
        p[i] = np.random.standard_normal()
    H0 = -lp + 0.5 * np.dot(p, p)
    q1, p1, g1, lp1 = _leaf(q, p, g, eps, scale, X, resid, w, prec, kind, beta)
    H = -lp1 + 0.5 * np.dot(p1, p1)
    la = H0 - H if math.isfinite(H) else -np.inf
    direction = 1.0 if la > math.log(0.5) else -1.0
    for _ in range(60):
        if direction * la <= direction * math.log(0.5):
            break
        eps *= 2.0 ** direction
        q1, p1, g1, lp1 = _leaf(q, p, g, eps, scale, X, resid, w, prec, kind, beta)
        H = -lp1 + 0.5 * np.dot(p1, p1)
        la = H0 - H if math.isfinite(H) else -np.inf
    return min(max(eps, 1e-8), 1e3)


@njit(cache=True)
def seed(s):
    np.random.seed(s)


@njit(cache=True)
def transition(q0, eps, max_depth, scale, X, resid, w, prec, kind, beta):
    """One NUTS transition in scaled coordinates.

    Returns (new point, depth, n_leapfrog, divergent, accept_stat).
    """
    lp0, g0 = logp_grad(q0, scale, X, resid, w, prec, kind, beta)
    if not (math.isfinite(lp0) and math.isfinite(np.dot(g0, g0))):
        return q0.copy(), 0, 0, True, 0.0
    n = q0.shape[0]
    p0 = np.empty(n)
    for i in range(n):
        p0[i] = np.random.standard_normal()
    H0 = -lp0 + 0.5 * np.dot(p0, p0)
    qm = q0
    qp = q0
    pm = p0
    pp = p0
    gm = g0
    gp = g0
    p_sum = p0.copy()
    proposal = q0
    log_w = -H0
    acc = 0.0
    n_leap = 0
    depth = 0
    divergent = False
    while depth < max_depth:
        direction = 1 if np.random.random() < 0.5 else -1
        if direction > 0:
            o = _build(qp, pp, gp, 1, depth, eps, H0, scale, X, resid, w, prec, kind, beta)
        else:
            o = _build(qm, pm, gm, -1, depth, eps, H0, scale, X, resid, w, prec, kind, beta)
        acc += o[11]
        n_leap += o[12]
        depth += 1
        if o[9]:
            divergent = o[10]
            break
        if math.log(np.random.random()) < o[7] - log_w:
            proposal = o[6]
        log_w = _logaddexp(log_w, o[7])
        if direction > 0:
            qp, pp, gp = o[3], o[4], o[5]
        else:
            qm, pm, gm = o[0], o[1], o[2]
        p_sum = p_sum + o[8]
        if _uturn(p_sum, pm, pp):
            break
    return proposal.copy(), depth, n_leap, divergent, acc / max(n_leap, 1)
