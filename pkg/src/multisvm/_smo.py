"""SMO inner loops.

The outer loop alternates full sweeps and non-bound sweeps as in Platt's
original, with KKT checks against the two thresholds ``b_up``/``b_low``
(Keerthi's modification 2).  A final second-order pass certifies the
result on a freshly recomputed gradient.

All routines work on a precomputed kernel matrix ``K`` and labels ``y`` in
{-1, +1} (float64).  ``grad`` holds ``g_i - y_i`` where
``g_i = sum_j alpha_j y_j K[i, j]``; it does not depend on the threshold.
The threshold ``theta`` follows the ``u = g - theta`` convention, so the model
bias is ``-theta``.
"""
import numpy as np

from ._accel import njit

# alpha values this close (relative to C) to a bound are snapped onto it
SNAP = 1e-13
# minimum relative alpha change accepted as progress
EPS = 1e-12


@njit
def _is_free(a, C):
    return a > 0.0 and a < C


@njit
def take_step(i1, i2, K, y, alpha, grad, C, theta):
    """Jointly optimize ``alpha[i1]``, ``alpha[i2]``.  Returns True on progress."""
    if i1 == i2:
        return False
    a1 = alpha[i1]
    a2 = alpha[i2]
    y1 = y[i1]
    y2 = y[i2]
    f1 = grad[i1]
    f2 = grad[i2]
    s = y1 * y2
    if y1 != y2:
        lo = max(0.0, a2 - a1)
        hi = min(C, C + a2 - a1)
    else:
        lo = max(0.0, a2 + a1 - C)
        hi = min(C, a2 + a1)
    if lo >= hi:
        return False
    k11 = K[i1, i1]
    k12 = K[i1, i2]
    k22 = K[i2, i2]
    eta = k11 + k22 - 2.0 * k12
    if eta > 1e-12 * (k11 + k22 + 1e-300):
        a2new = a2 + y2 * (f1 - f2) / eta
        if a2new < lo:
            a2new = lo
        elif a2new > hi:
            a2new = hi
    else:
        # flat or concave along the constraint line: take the better endpoint
        v1 = y1 * f1 - a1 * k11 - s * a2 * k12
        v2 = y2 * f2 - s * a1 * k12 - a2 * k22
        l1 = a1 + s * (a2 - lo)
        h1 = a1 + s * (a2 - hi)
        obj_lo = l1 * v1 + lo * v2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12
        obj_hi = h1 * v1 + hi * v2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12
        if obj_lo < obj_hi - EPS * (abs(obj_lo) + abs(obj_hi) + 1.0):
            a2new = lo
        elif obj_lo > obj_hi + EPS * (abs(obj_lo) + abs(obj_hi) + 1.0):
            a2new = hi
        else:
            a2new = a2
    snap = SNAP * C
    if a2new < snap:
        a2new = 0.0
    elif a2new > C - snap:
        a2new = C
    if abs(a2new - a2) < EPS * (a2new + a2 + EPS):
        return False
    a1new = a1 + s * (a2 - a2new)
    if a1new < snap:
        a2new += s * a1new
        a1new = 0.0
    elif a1new > C - snap:
        a2new += s * (a1new - C)
        a1new = C
    # snap again: the rebalance above can leave a2 an ulp away from a bound
    if a2new < snap:
        a2new = 0.0
    elif a2new > C - snap:
        a2new = C
    d1 = y1 * (a1new - a1)
    d2 = y2 * (a2new - a2)
    for k in range(grad.shape[0]):
        grad[k] += d1 * K[k, i1] + d2 * K[k, i2]
    alpha[i1] = a1new
    alpha[i2] = a2new
    if _is_free(a1new, C):
        theta[0] = grad[i1]
    elif _is_free(a2new, C):
        theta[0] = grad[i2]
    else:
        theta[0] = 0.5 * (grad[i1] + grad[i2])
    return True


@njit
def _next_start(draws, cursor, n):
    u = draws[cursor[0] % draws.shape[0]]
    cursor[0] += 1
    return int(u * n) % n


@njit
def _in_up(yi, a, C):
    return a < C if yi > 0 else a > 0.0


@njit
def _in_low(yi, a, C):
    return a > 0.0 if yi > 0 else a < C


@njit
def examine_example(i2, K, y, alpha, grad, C, tol, theta, draws, cursor):
    """Two-threshold KKT check on ``i2``; on violation step with the worse threshold's index."""
    n = y.shape[0]
    b_up, i_up, b_low, i_low = violating_pair(y, alpha, grad, C)
    f2 = grad[i2]
    i1 = -1
    if _in_up(y[i2], alpha[i2], C) and b_low - f2 > 2.0 * tol:
        i1 = i_low
    if _in_low(y[i2], alpha[i2], C) and f2 - b_up > 2.0 * tol:
        if i1 < 0 or f2 - b_up > b_low - f2:
            i1 = i_up
    if i1 < 0:
        return 0
    if take_step(i1, i2, K, y, alpha, grad, C, theta):
        return 1
    start = _next_start(draws, cursor, n)
    for k in range(n):
        i1 = (start + k) % n
        if _is_free(alpha[i1], C) and take_step(i1, i2, K, y, alpha, grad, C, theta):
            return 1
    start = _next_start(draws, cursor, n)
    for k in range(n):
        i1 = (start + k) % n
        if take_step(i1, i2, K, y, alpha, grad, C, theta):
            return 1
    return 0


@njit
def free_pair(y, alpha, grad, C):
    """Extreme gradients over the non-bound examples: ``(b_up, i_up, b_low, i_low)``."""
    b_up = np.inf
    b_low = -np.inf
    i_up = -1
    i_low = -1
    for i in range(y.shape[0]):
        if _is_free(alpha[i], C):
            if grad[i] < b_up:
                b_up = grad[i]
                i_up = i
            if grad[i] > b_low:
                b_low = grad[i]
                i_low = i
    return b_up, i_up, b_low, i_low


@njit
def violating_pair(y, alpha, grad, C):
    """Return ``(b_up, i_up, b_low, i_low)`` over the two index sets."""
    b_up = np.inf
    b_low = -np.inf
    i_up = -1
    i_low = -1
    for i in range(y.shape[0]):
        a = alpha[i]
        if y[i] > 0:
            in_up = a < C
            in_low = a > 0.0
        else:
            in_up = a > 0.0
            in_low = a < C
        if in_up and grad[i] < b_up:
            b_up = grad[i]
            i_up = i
        if in_low and grad[i] > b_low:
            b_low = grad[i]
            i_low = i
    return b_up, i_up, b_low, i_low


@njit
def second_order_partner(i_up, b_up, K, y, alpha, grad, C, free_only):
    """Index in the low set (non-bound only with ``free_only``) maximizing the gain ``diff**2 / eta``."""
    best = -1
    best_gain = -1.0
    kii = K[i_up, i_up]
    for j in range(y.shape[0]):
        a = alpha[j]
        if free_only:
            if not _is_free(a, C):
                continue
        elif not _in_low(y[j], a, C):
            continue
        diff = grad[j] - b_up
        if diff <= 0.0:
            continue
        eta = kii + K[j, j] - 2.0 * K[i_up, j]
        if eta < 1e-12:
            eta = 1e-12
        gain = diff * diff / eta
        if gain > best_gain:
            best_gain = gain
            best = j
    return best


@njit
def _fresh_grad(K, y, alpha):
    n = y.shape[0]
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(n):
            if alpha[j] != 0.0:
                s += alpha[j] * y[j] * K[i, j]
        out[i] = s - y[i]
    return out


@njit
def smo_solve(K, y, C, tol, max_steps, draws):
    """Solve the soft-margin dual.

    Returns ``(alpha, theta, steps, gap, converged)`` where ``gap`` is
    ``b_low - b_up``; convergence means ``gap <= 2 * tol``.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -y.copy()
    theta = np.zeros(1)
    cursor = np.zeros(1, dtype=np.int64)
    steps = 0

    num_changed = 0
    examine_all = True
    while (num_changed > 0 or examine_all) and steps < max_steps:
        num_changed = 0
        if examine_all:
            for i in range(n):
                num_changed += examine_example(i, K, y, alpha, grad, C, tol, theta, draws, cursor)
                if steps + num_changed >= max_steps:
                    break
            steps += num_changed
        else:
            # optimize over the non-bound examples until their thresholds agree
            while steps < max_steps:
                b_up, i_up, b_low, i_low = free_pair(y, alpha, grad, C)
                if i_up < 0 or b_low - b_up <= 2.0 * tol:
                    break
                j = second_order_partner(i_up, b_up, K, y, alpha, grad, C, True)
                if j < 0 or not take_step(i_up, j, K, y, alpha, grad, C, theta):
                    if not take_step(i_up, i_low, K, y, alpha, grad, C, theta):
                        break
                steps += 1
        if examine_all:
            examine_all = False
        elif num_changed == 0:
            examine_all = True

    # certify against the two-threshold condition, finishing with second-order violating pairs
    converged = False
    refreshed = False
    gap = np.inf
    while True:
        b_up, i_up, b_low, i_low = violating_pair(y, alpha, grad, C)
        gap = b_low - b_up
        if gap <= 2.0 * tol:
            if refreshed:
                converged = True
                break
            grad = _fresh_grad(K, y, alpha)
            refreshed = True
            continue
        refreshed = False
        if steps >= max_steps:
            break
        j = second_order_partner(i_up, b_up, K, y, alpha, grad, C, False)
        if j < 0 or not take_step(i_up, j, K, y, alpha, grad, C, theta):
            if not take_step(i_up, i_low, K, y, alpha, grad, C, theta):
                break
        steps += 1

    if converged:
        theta[0] = 0.5 * (b_up + b_low)
    return alpha, theta[0], steps, gap, converged
