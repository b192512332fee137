"""Pure-Python/numpy kernels: reference implementations of the hot loops.

These mirror the compiled kernels in ``_ckern.pyx`` operation for
operation (stable sorts, sequential prefix sums, identical expression
order), so the two backends produce identical fits. Selection happens
in ``_backend``.
"""

from __future__ import annotations

import numpy as np

IMPL = "python"


# ---------------------------------------------------------------------------
# CART regression tree
# ---------------------------------------------------------------------------

def tree_build(x0, x1, y, max_depth, min_leaf, min_improvement):
    """Grow a CART on two features with squared-error impurity.

    Returns flat node arrays (feature, threshold, left, right, value);
    feature = -1 marks a leaf. Nodes are created in breadth-first order,
    left child before right, so the layout is a pure function of the
    inputs. A node's id equals its position in the creation queue.
    """
    n = y.shape[0]
    feats = (np.asarray(x0, dtype=float), np.asarray(x1, dtype=float))
    yv = np.asarray(y, dtype=float)

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx, depth):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        queue.append((idx, depth))

    queue = []
    new_node(np.arange(n, dtype=np.int64), 0)

    node = 0
    while node < len(queue):
        idx, depth = queue[node]
        m = idx.shape[0]
        ynode = yv[idx]
        total_c = float(np.cumsum(ynode)[-1])
        value[node] = total_c / m
        if depth >= max_depth or m < 2 * min_leaf or m < 2:
            node += 1
            continue

        best_score = -np.inf
        best_f = -1
        best_total = 0.0
        best_thr = 0.0
        for f in (0, 1):
            xs_all = feats[f][idx]
            order = np.argsort(xs_all, kind="stable")
            xs = xs_all[order]
            ls = np.cumsum(ynode[order])
            total = float(ls[-1])
            l = ls[:-1]
            kk = np.arange(1, m, dtype=float)
            rs = total - l
            score = l * l / kk + rs * rs / (m - kk)
            valid = (
                (kk >= min_leaf)
                & (kk <= m - min_leaf)
                & (xs[:-1] < xs[1:])
            )
            if not np.any(valid):
                continue
            score = np.where(valid, score, -np.inf)
            pos = int(np.argmax(score))
            if score[pos] > best_score:
                best_score = float(score[pos])
                best_f = f
                best_total = total
                best_thr = 0.5 * (xs[pos] + xs[pos + 1])
        if best_f >= 0:
            improvement = best_score - best_total * best_total / m
            if improvement >= min_improvement and improvement > 0.0:
                go_left = feats[best_f][idx] <= best_thr
                feature[node] = best_f
                threshold[node] = best_thr
                left[node] = len(queue)
                new_node(idx[go_left], depth + 1)
                right[node] = len(queue)
                new_node(idx[~go_left], depth + 1)
        node += 1

    return (
        np.asarray(feature, dtype=np.int32),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int32),
        np.asarray(right, dtype=np.int32),
        np.asarray(value, dtype=float),
    )


def tree_predict(feature, threshold, left, right, value, q0, q1):
    """Route query points through the tree; returns leaf values."""
    m = q0.shape[0]
    cur = np.zeros(m, dtype=np.int64)
    pending = feature[cur] >= 0
    while np.any(pending):
        nodes = cur[pending]
        f = feature[nodes]
        thr = threshold[nodes]
        x = np.where(f == 0, q0[pending], q1[pending])
        cur[pending] = np.where(x <= thr, left[nodes], right[nodes])
        pending = feature[cur] >= 0
    return value[cur].astype(float)


# ---------------------------------------------------------------------------
# SMO solver for epsilon-insensitive SVR
# ---------------------------------------------------------------------------
# State is kept in terms of beta_i = alpha_i - alpha_i^* in [-C, C] with
# the equality constraint sum(beta) = 0, and the cached bias-free
# residual E_i = sum_k beta_k K_ik - y_i.

def _violation(beta, E, b, C, eps, i):
    r = E[i] + b
    bi = beta[i]
    if bi == 0.0:
        v = abs(r) - eps
        return v if v > 0.0 else 0.0
    if bi == C:
        v = r + eps
        return v if v > 0.0 else 0.0
    if bi == -C:
        v = eps - r
        return v if v > 0.0 else 0.0
    if bi > 0.0:
        return abs(r + eps)
    return abs(r - eps)


def _max_violation(beta, E, b, C, eps, n):
    worst = 0.0
    for i in range(n):
        v = _violation(beta, E, b, C, eps, i)
        if v > worst:
            worst = v
    return worst


def _pair_step(K, beta, E, C, eps, i, j):
    """Exact minimizer of the pair subproblem.

    Returns the new (beta_i, beta_j) values. Results within a tiny
    absolute distance of the anchor states 0 and +-C are rounded onto
    them: the KKT cases and the working-set eligibility key on exact
    anchor membership, and a coefficient stranded 1 ulp off a bound
    would otherwise stall the solver.
    """
    eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
    bi = beta[i]
    s = bi + beta[j]
    if eta <= 0.0:
        return bi, beta[j]
    t0 = bi - (E[i] - E[j]) / eta
    L = s - C
    if -C > L:
        L = -C
    H = s + C
    if C < H:
        H = C
    if L >= H:
        return bi, beta[j]

    # G(t) = eta/2 (t-t0)^2 + eps|t| + eps|s-t|: convex and piecewise
    # quadratic with breakpoints at 0 and s. Evaluate the clipped
    # per-piece minimizers plus the breakpoints, keep the best.
    b1 = 0.0 if 0.0 < s else s
    b2 = s if 0.0 < s else 0.0
    cands = []
    pieces = ((L, min(b1, H)), (max(b1, L), min(b2, H)), (max(b2, L), H))
    for plo, phi in pieces:
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
        cands.append(t)
    for t in (b1, b2, L, H):
        if L <= t <= H:
            cands.append(t)

    best_t = bi
    best_g = np.inf
    for t in cands:
        d = t - t0
        g = 0.5 * eta * d * d + eps * abs(t) + eps * abs(s - t)
        if g < best_g:
            best_g = g
            best_t = t
    snap = 1e-10 * (1.0 + C)
    ti = _snap(best_t, C, snap)
    tj = _snap(s - ti, C, snap)
    return ti, tj


def _snap(v, C, snap):
    if abs(v) <= snap:
        return 0.0
    if abs(v - C) <= snap:
        return C
    if abs(v + C) <= snap:
        return -C
    return v


def smo_solve(K, y, C, eps, tol, max_passes):
    """Solve the epsilon-SVR dual by sequential minimal optimization.

    Working set = maximal violating pair: i minimizes the ascent
    derivative over coefficients free to increase, j maximizes the
    descent derivative over those free to decrease (ties to the lowest
    index), and the pair subproblem is solved exactly. The bias is the
    midpoint of the optimality interval, so a gap <= tol guarantees
    every sample passes the KKT check within tol. Budget is max_passes
    blocks of n pair updates. Returns (beta, b, iters, violation,
    converged).
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    beta = np.zeros(n)
    E = -y.copy()
    max_iter = max_passes * n
    iters = 0
    while True:
        up = E + np.where(beta >= 0.0, eps, -eps)
        up = np.where(beta < C, up, np.inf)
        i = int(np.argmin(up))
        dn = E + np.where(beta > 0.0, eps, -eps)
        dn = np.where(beta > -C, dn, -np.inf)
        j = int(np.argmax(dn))
        gap = dn[j] - up[i]
        b = -0.5 * (up[i] + dn[j])
        if gap <= tol or iters >= max_iter:
            break
        ti, tj = _pair_step(K, beta, E, C, eps, i, j)
        di = ti - beta[i]
        dj = tj - beta[j]
        if abs(di) + abs(dj) <= 1e-16 * (1.0 + abs(beta[i]) + abs(beta[j])):
            break  # roundoff floor, no further progress possible
        beta[i] = ti
        beta[j] = tj
        E += di * K[i] + dj * K[j]
        iters += 1
    worst = _max_violation(beta, E, b, C, eps, n)
    return beta, b, iters, worst, 1 if worst <= tol else 0
