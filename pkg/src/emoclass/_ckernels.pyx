# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Gini threshold scan and the SMO dual solver.

Must stay numerically identical to ``_kernels_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

cdef double TAU = 1e-12


def gini_scan(const double[:, ::1] X, const cnp.int64_t[:, ::1] order,
              const cnp.int64_t[::1] y, int n_classes, int min_leaf, double rel_tol):
    """Best (column, threshold, score) over all columns of ``X``.

    ``order[:, j]`` sorts column j ascending. The score is
    ``sum_l(left^2)/n_l + sum_r(right^2)/n_r``; larger is better. Returns
    column -1 when no boundary satisfies ``min_leaf``.
    """
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, c, a, b
    cdef cnp.int64_t[::1] total = np.zeros(n_classes, dtype=np.int64)
    cdef cnp.int64_t[::1] left = np.zeros(n_classes, dtype=np.int64)
    cdef cnp.int64_t[::1] right = np.zeros(n_classes, dtype=np.int64)
    cdef long long sl, sr, s_total = 0
    cdef double q, best = -INFINITY, thr, best_thr = 0.0, lo, hi
    cdef Py_ssize_t best_col = -1
    for i in range(n):
        total[y[i]] += 1
    for c in range(n_classes):
        s_total += total[c] * total[c]
    for j in range(d):
        for c in range(n_classes):
            left[c] = 0
            right[c] = total[c]
        sl = 0
        sr = s_total
        for i in range(n - 1):
            a = order[i, j]
            c = y[a]
            sl += 2 * left[c] + 1
            sr -= 2 * right[c] - 1
            left[c] += 1
            right[c] -= 1
            b = order[i + 1, j]
            lo = X[a, j]
            hi = X[b, j]
            if lo == hi:
                continue
            if i + 1 < min_leaf or n - i - 1 < min_leaf:
                continue
            q = (<double>sl) / (i + 1) + (<double>sr) / (n - i - 1)
            if q > best + rel_tol * (best if best > 1.0 else 1.0):
                best = q
                best_col = j
                thr = lo + (hi - lo) * 0.5
                if thr >= hi:
                    thr = lo
                best_thr = thr
    return best_col, best_thr, best


def smo_solve(const double[:, ::1] Q, const double[::1] y, double C, double tol, long max_iter):
    """Solve ``min 0.5 a'Qa - sum(a)`` s.t. ``0 <= a <= C``, ``y'a = 0``.

    ``Q[i, j] = y_i y_j K(x_i, x_j)``. Working-set selection uses second-order
    information; stops when the maximal KKT violation drops below ``tol``.
    Returns (alpha, rho, iterations, converged).
    """
    cdef Py_ssize_t n = Q.shape[0]
    cdef double[::1] alpha = np.zeros(n)
    cdef double[::1] G = np.full(n, -1.0)
    cdef Py_ssize_t t, i, j
    cdef long it = 0
    cdef double gmax, gmax2, obj_min, grad_diff, quad, obj, yi
    cdef double old_ai, old_aj, delta, diff, total, dai, daj
    cdef bint converged = False
    while it < max_iter:
        gmax = -INFINITY
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C and -G[t] > gmax:
                    gmax = -G[t]
                    i = t
            else:
                if alpha[t] > 0 and G[t] > gmax:
                    gmax = G[t]
                    i = t
        if i == -1:
            converged = True
            break
        yi = y[i]
        gmax2 = -INFINITY
        j = -1
        obj_min = INFINITY
        for t in range(n):
            if y[t] > 0:
                if alpha[t] > 0:
                    grad_diff = gmax + G[t]
                    if G[t] > gmax2:
                        gmax2 = G[t]
                    if grad_diff > 0:
                        quad = Q[i, i] + Q[t, t] - 2.0 * yi * Q[i, t]
                        if quad <= 0:
                            quad = TAU
                        obj = -(grad_diff * grad_diff) / quad
                        if obj < obj_min:
                            obj_min = obj
                            j = t
            else:
                if alpha[t] < C:
                    grad_diff = gmax - G[t]
                    if -G[t] > gmax2:
                        gmax2 = -G[t]
                    if grad_diff > 0:
                        quad = Q[i, i] + Q[t, t] + 2.0 * yi * Q[i, t]
                        if quad <= 0:
                            quad = TAU
                        obj = -(grad_diff * grad_diff) / quad
                        if obj < obj_min:
                            obj_min = obj
                            j = t
        if gmax + gmax2 < tol or j == -1:
            converged = True
            break
        it += 1
        old_ai = alpha[i]
        old_aj = alpha[j]
        if y[i] != y[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0
                    alpha[j] = total
        dai = alpha[i] - old_ai
        daj = alpha[j] - old_aj
        for t in range(n):
            G[t] += Q[i, t] * dai + Q[j, t] * daj
    return np.asarray(alpha), _rho(G, alpha, y, C), it, converged


cdef double _rho(double[::1] G, double[::1] alpha, const double[::1] y, double C):
    cdef Py_ssize_t t, n = G.shape[0]
    cdef double ub = INFINITY, lb = -INFINITY, s = 0.0, yG
    cdef long n_free = 0
    for t in range(n):
        yG = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        else:
            n_free += 1
            s += yG
    if n_free > 0:
        return s / n_free
    if ub == INFINITY:
        return lb
    if lb == -INFINITY:
        return ub
    return (ub + lb) / 2
