"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``.

Same algorithms, same tie rules, same floating-point operation order.
"""
from __future__ import annotations

import numpy as np

TAU = 1e-12


def gini_scan(X, order, y, n_classes, min_leaf, rel_tol):
    n, d = X.shape
    best, best_col, best_thr = -np.inf, -1, 0.0
    if n < 2:
        return best_col, best_thr, best
    onehot = np.zeros((n, n_classes), dtype=np.int64)
    total = np.bincount(y, minlength=n_classes).astype(np.int64)
    nl = np.arange(1, n)
    nr = n - nl
    size_ok = (nl >= min_leaf) & (nr >= min_leaf)
    for j in range(d):
        idx = order[:, j]
        xs = X[idx, j]
        onehot[:] = 0
        onehot[np.arange(n), y[idx]] = 1
        left = np.cumsum(onehot, axis=0)[:-1]
        right = total - left
        sl = (left * left).sum(axis=1)
        sr = (right * right).sum(axis=1)
        valid = size_ok & (xs[:-1] != xs[1:])
        if not valid.any():
            continue
        q = sl / nl + sr / nr
        q = np.where(valid, q, -np.inf)
        for i in np.flatnonzero(valid):
            if q[i] > best + rel_tol * (best if best > 1.0 else 1.0):
                best = float(q[i])
                best_col = j
                lo, hi = xs[i], xs[i + 1]
                thr = lo + (hi - lo) * 0.5
                best_thr = float(lo if thr >= hi else thr)
    return best_col, best_thr, best


def smo_solve(Q, y, C, tol, max_iter):
    n = Q.shape[0]
    alpha = np.zeros(n)
    G = np.full(n, -1.0)
    diagQ = np.diag(Q).copy()
    pos = y > 0
    it = 0
    converged = False
    while it < max_iter:
        up_score = np.where(pos, np.where(alpha < C, -G, -np.inf), np.where(alpha > 0, G, -np.inf))
        i = int(np.argmax(up_score))
        gmax = up_score[i]
        if gmax == -np.inf:
            converged = True
            break
        yi = y[i]
        Qi = Q[i]
        low_pos = pos & (alpha > 0)
        low_neg = ~pos & (alpha < C)
        cand = np.where(low_pos, G, np.where(low_neg, -G, -np.inf))
        gmax2 = cand.max()
        grad_diff = np.where(low_pos, gmax + G, np.where(low_neg, gmax - G, -np.inf))
        quad = np.where(pos, diagQ[i] + diagQ - 2.0 * yi * Qi, diagQ[i] + diagQ + 2.0 * yi * Qi)
        quad = np.where(quad <= 0, TAU, quad)
        ok = grad_diff > 0
        if gmax + gmax2 < tol or not ok.any():
            converged = True
            break
        obj = np.where(ok, -(np.where(ok, grad_diff, 0.0) ** 2) / quad, np.inf)
        j = int(np.argmin(obj))
        it += 1
        old_ai, old_aj = alpha[i], alpha[j]
        ai, aj = old_ai, old_aj
        if y[i] != y[j]:
            q = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            q = TAU if q <= 0 else q
            delta = (-G[i] - G[j]) / q
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            q = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            q = TAU if q <= 0 else q
            delta = (G[i] - G[j]) / q
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += Q[i] * (ai - old_ai) + Q[j] * (aj - old_aj)
    return alpha, _rho(G, alpha, y, C), it, converged


def _rho(G, alpha, y, C):
    yG = y * G
    upper = alpha >= C
    lower = alpha <= 0
    free = ~upper & ~lower
    if free.any():
        return float(yG[free].sum() / free.sum())
    ub_mask = (upper & (y < 0)) | (lower & (y > 0))
    lb_mask = (upper & (y > 0)) | (lower & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    if ub == np.inf:
        return float(lb)
    if lb == -np.inf:
        return float(ub)
    return float((ub + lb) / 2)
