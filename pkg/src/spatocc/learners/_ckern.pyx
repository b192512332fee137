# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: CART split search/predict and the SMO dual solver.

Semantics match ``_pykern`` exactly, down to floating-point operation
order (stable sorts, sequential accumulation, identical expressions),
so either backend yields the same fitted surfaces.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()

IMPL = "compiled"


# ---------------------------------------------------------------------------
# CART regression tree
# ---------------------------------------------------------------------------

cdef void _merge_argsort(double* key, long long* order, long long* tmp,
                         Py_ssize_t m) noexcept nogil:
    # bottom-up stable merge sort of order[0:m] by key[order[t]]
    cdef Py_ssize_t width = 1, lo, mid, hi, a, b, k
    while width < m:
        lo = 0
        while lo < m:
            mid = lo + width
            if mid > m:
                mid = m
            hi = lo + 2 * width
            if hi > m:
                hi = m
            a = lo
            b = mid
            k = lo
            while a < mid and b < hi:
                if key[order[b]] < key[order[a]]:
                    tmp[k] = order[b]
                    b += 1
                else:
                    tmp[k] = order[a]
                    a += 1
                k += 1
            while a < mid:
                tmp[k] = order[a]
                a += 1
                k += 1
            while b < hi:
                tmp[k] = order[b]
                b += 1
                k += 1
            for k in range(lo, hi):
                order[k] = tmp[k]
            lo += 2 * width
        width *= 2


def tree_build(x0_in, x1_in, y_in, int max_depth, int min_leaf,
               double min_improvement):
    """Grow a CART on two features; see the pure backend for the contract."""
    x0 = np.ascontiguousarray(x0_in, dtype=np.float64)
    x1 = np.ascontiguousarray(x1_in, dtype=np.float64)
    y = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef const double[::1] x0v = x0
    cdef const double[::1] x1v = x1
    cdef const double[::1] yv = y
    cdef Py_ssize_t n = yv.shape[0]
    cdef Py_ssize_t cap = 2 * n + 1

    feature_arr = np.full(cap, -1, dtype=np.int32)
    threshold_arr = np.zeros(cap, dtype=np.float64)
    left_arr = np.full(cap, -1, dtype=np.int32)
    right_arr = np.full(cap, -1, dtype=np.int32)
    value_arr = np.zeros(cap, dtype=np.float64)
    cdef int[::1] feature = feature_arr
    cdef double[::1] threshold = threshold_arr
    cdef int[::1] left = left_arr
    cdef int[::1] right = right_arr
    cdef double[::1] value = value_arr

    members_arr = np.arange(n, dtype=np.int64)
    cdef long long[::1] members = members_arr
    cdef long long[::1] scratch = np.empty(n, dtype=np.int64)
    cdef long long[::1] order = np.empty(max(n, 1), dtype=np.int64)
    cdef long long[::1] tmp = np.empty(max(n, 1), dtype=np.int64)
    cdef double[::1] keys = np.empty(max(n, 1), dtype=np.float64)

    cdef long long[::1] node_lo = np.zeros(cap, dtype=np.int64)
    cdef long long[::1] node_hi = np.zeros(cap, dtype=np.int64)
    cdef int[::1] node_depth = np.zeros(cap, dtype=np.int32)

    cdef Py_ssize_t n_nodes = 1, node = 0
    node_lo[0] = 0
    node_hi[0] = n
    node_depth[0] = 0

    cdef Py_ssize_t lo, hi, m, t, k, pos, nl
    cdef int depth, f, best_f
    cdef double total_c, total, ls, rs, score, best_score, best_total, best_thr
    cdef double improvement, thr
    cdef const double[::1] xf
    cdef long long idx

    while node < n_nodes:
        lo = node_lo[node]
        hi = node_hi[node]
        m = hi - lo
        depth = node_depth[node]
        total_c = 0.0
        for t in range(lo, hi):
            total_c += yv[members[t]]
        value[node] = total_c / m
        if depth >= max_depth or m < 2 * min_leaf or m < 2:
            node += 1
            continue

        best_score = -INFINITY
        best_f = -1
        best_total = 0.0
        best_thr = 0.0
        for f in range(2):
            if f == 0:
                xf = x0v
            else:
                xf = x1v
            for t in range(m):
                order[t] = t
                keys[t] = xf[members[lo + t]]
            _merge_argsort(&keys[0], &order[0], &tmp[0], m)
            total = 0.0
            for t in range(m):
                total += yv[members[lo + order[t]]]
            ls = 0.0
            for k in range(1, m):
                ls += yv[members[lo + order[k - 1]]]
                if k < min_leaf or k > m - min_leaf:
                    continue
                if not (keys[order[k - 1]] < keys[order[k]]):
                    continue
                rs = total - ls
                score = ls * ls / k + rs * rs / (m - k)
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_total = total
                    best_thr = 0.5 * (keys[order[k - 1]] + keys[order[k]])
        if best_f >= 0:
            improvement = best_score - best_total * best_total / m
            if improvement >= min_improvement and improvement > 0.0:
                if best_f == 0:
                    xf = x0v
                else:
                    xf = x1v
                thr = best_thr
                for t in range(m):
                    scratch[t] = members[lo + t]
                nl = 0
                for t in range(m):
                    idx = scratch[t]
                    if xf[idx] <= thr:
                        members[lo + nl] = idx
                        nl += 1
                k = nl
                for t in range(m):
                    idx = scratch[t]
                    if not (xf[idx] <= thr):
                        members[lo + k] = idx
                        k += 1
                feature[node] = best_f
                threshold[node] = thr
                left[node] = <int> n_nodes
                node_lo[n_nodes] = lo
                node_hi[n_nodes] = lo + nl
                node_depth[n_nodes] = depth + 1
                n_nodes += 1
                right[node] = <int> n_nodes
                node_lo[n_nodes] = lo + nl
                node_hi[n_nodes] = hi
                node_depth[n_nodes] = depth + 1
                n_nodes += 1
        node += 1

    return (
        feature_arr[:n_nodes].copy(),
        threshold_arr[:n_nodes].copy(),
        left_arr[:n_nodes].copy(),
        right_arr[:n_nodes].copy(),
        value_arr[:n_nodes].copy(),
    )


def tree_predict(feature_in, threshold_in, left_in, right_in, value_in,
                 q0_in, q1_in):
    """Route query points through the tree; returns leaf values."""
    cdef const int[::1] feature = np.ascontiguousarray(feature_in, dtype=np.int32)
    cdef const double[::1] threshold = np.ascontiguousarray(threshold_in, dtype=np.float64)
    cdef const int[::1] left = np.ascontiguousarray(left_in, dtype=np.int32)
    cdef const int[::1] right = np.ascontiguousarray(right_in, dtype=np.int32)
    cdef const double[::1] value = np.ascontiguousarray(value_in, dtype=np.float64)
    cdef const double[::1] q0 = np.ascontiguousarray(q0_in, dtype=np.float64)
    cdef const double[::1] q1 = np.ascontiguousarray(q1_in, dtype=np.float64)
    cdef Py_ssize_t m = q0.shape[0]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef int node
    cdef double x
    for i in range(m):
        node = 0
        while feature[node] >= 0:
            x = q0[i] if feature[node] == 0 else q1[i]
            node = left[node] if x <= threshold[node] else right[node]
        out[i] = value[node]
    return out_arr


# ---------------------------------------------------------------------------
# SMO solver for epsilon-insensitive SVR (beta_i = alpha_i - alpha_i^*)
# ---------------------------------------------------------------------------

cdef double _violation(double[::1] beta, double[::1] E, double b, double C,
                       double eps, Py_ssize_t i) noexcept nogil:
    cdef double r = E[i] + b
    cdef double bi = beta[i]
    cdef double v
    if bi == 0.0:
        v = fabs(r) - eps
        return v if v > 0.0 else 0.0
    if bi == C:
        v = r + eps
        return v if v > 0.0 else 0.0
    if bi == -C:
        v = eps - r
        return v if v > 0.0 else 0.0
    if bi > 0.0:
        return fabs(r + eps)
    return fabs(r - eps)


cdef double _max_violation(double[::1] beta, double[::1] E, double b,
                           double C, double eps, Py_ssize_t n) noexcept nogil:
    cdef double worst = 0.0, v
    cdef Py_ssize_t i
    for i in range(n):
        v = _violation(beta, E, b, C, eps, i)
        if v > worst:
            worst = v
    return worst


cdef inline double _snap_anchor(double v, double C, double snap) noexcept nogil:
    # exact anchor membership (0, +-C) is what the KKT cases and the
    # working-set eligibility key on; round near misses onto them
    if fabs(v) <= snap:
        return 0.0
    if fabs(v - C) <= snap:
        return C
    if fabs(v + C) <= snap:
        return -C
    return v


cdef void _pair_step(const double[:, ::1] K, double[::1] beta, double[::1] E,
                     double C, double eps, Py_ssize_t i, Py_ssize_t j,
                     double* ti_out, double* tj_out) noexcept nogil:
    cdef double eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
    cdef double bi = beta[i]
    cdef double s = bi + beta[j]
    cdef double t0, L, H, b1, b2, plo, phi, mid, si, sj, t, d, g
    cdef double best_t, best_g, snap, ti
    cdef double cand[7]
    cdef double p_lo[3]
    cdef double p_hi[3]
    cdef Py_ssize_t ncand = 0, c
    ti_out[0] = bi
    tj_out[0] = beta[j]
    if eta <= 0.0:
        return
    t0 = bi - (E[i] - E[j]) / eta
    L = s - C
    if -C > L:
        L = -C
    H = s + C
    if C < H:
        H = C
    if L >= H:
        return

    b1 = 0.0 if 0.0 < s else s
    b2 = s if 0.0 < s else 0.0
    p_lo[0] = L
    p_hi[0] = b1 if b1 < H else H
    p_lo[1] = b1 if b1 > L else L
    p_hi[1] = b2 if b2 < H else H
    p_lo[2] = b2 if b2 > L else L
    p_hi[2] = H
    for c in range(3):
        plo = p_lo[c]
        phi = p_hi[c]
        if plo >= phi:
            continue
        mid = 0.5 * (plo + phi)
        si = 1.0 if mid > 0.0 else -1.0
        sj = 1.0 if (s - mid) > 0.0 else -1.0
        t = t0 - eps * (si - sj) / eta
        if t < plo:
            t = plo
        elif t > phi:
            t = phi
        cand[ncand] = t
        ncand += 1
    if L <= b1 and b1 <= H:
        cand[ncand] = b1
        ncand += 1
    if L <= b2 and b2 <= H:
        cand[ncand] = b2
        ncand += 1
    cand[ncand] = L
    ncand += 1
    cand[ncand] = H
    ncand += 1

    best_t = bi
    best_g = INFINITY
    for c in range(ncand):
        t = cand[c]
        d = t - t0
        g = 0.5 * eta * d * d + eps * fabs(t) + eps * fabs(s - t)
        if g < best_g:
            best_g = g
            best_t = t
    snap = 1e-10 * (1.0 + C)
    ti = _snap_anchor(best_t, C, snap)
    tj_out[0] = _snap_anchor(s - ti, C, snap)
    ti_out[0] = ti


def smo_solve(K_in, y_in, double C, double eps, double tol, int max_passes):
    """Deterministic SMO for the epsilon-SVR dual; see the pure backend."""
    K_arr = np.ascontiguousarray(K_in, dtype=np.float64)
    y_arr = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef const double[:, ::1] K = K_arr
    cdef const double[::1] y = y_arr
    cdef Py_ssize_t n = y.shape[0]
    beta_arr = np.zeros(n, dtype=np.float64)
    E_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] beta = beta_arr
    cdef double[::1] E = E_arr
    cdef Py_ssize_t k, i, j
    for k in range(n):
        E[k] = -y[k]

    cdef long long max_iter = (<long long> max_passes) * (<long long> n)
    cdef long long iters = 0
    cdef double min_up, max_dn, gap, b, v, ti, tj, di, dj, worst

    while True:
        min_up = INFINITY
        i = 0
        for k in range(n):
            if not (beta[k] < C):
                continue
            v = E[k] + (eps if beta[k] >= 0.0 else -eps)
            if v < min_up:
                min_up = v
                i = k
        max_dn = -INFINITY
        j = 0
        for k in range(n):
            if not (beta[k] > -C):
                continue
            v = E[k] + (eps if beta[k] > 0.0 else -eps)
            if v > max_dn:
                max_dn = v
                j = k
        gap = max_dn - min_up
        b = -0.5 * (min_up + max_dn)
        if gap <= tol or iters >= max_iter:
            break
        _pair_step(K, beta, E, C, eps, i, j, &ti, &tj)
        di = ti - beta[i]
        dj = tj - beta[j]
        if fabs(di) + fabs(dj) <= 1e-16 * (1.0 + fabs(beta[i]) + fabs(beta[j])):
            break
        beta[i] = ti
        beta[j] = tj
        for k in range(n):
            E[k] += di * K[i, k] + dj * K[j, k]
        iters += 1

    worst = _max_violation(beta, E, b, C, eps, n)
    return beta_arr, float(b), int(iters), float(worst), 1 if worst <= tol else 0
