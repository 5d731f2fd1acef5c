"""Exact 1-d optimal transport for the truncated cost min(|x - y|, 1).

Sorted (monotone) matching is optimal for |x - y| but not for the truncated
cost: X = {0, 1}, Y = {0.9, 1.9} costs 1.8 monotonically and 1.1 optimally.
We solve the Kantorovich dual instead.  With points merged in increasing
order and signed masses s_p, the value is

    max sum_p s_p phi_p   s.t.  |phi_{p+1} - phi_p| <= gap_p,  phi_p in [0, 1]

(1-Lipschitz for the truncated metric means Lipschitz plus oscillation <= 1).
This is a chain DP whose value function is concave piecewise linear; we keep
U = -V as a convex function in slope-trick form: two heaps of breakpoints
(max-heap L left of the minimum, min-heap R right of it) with integer slope
weights, lazy position offsets and the running minimum.  O(n log n).
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _push(keys, wts, size, key, w, sign):
    # sign = +1: max-heap on key; sign = -1: min-heap (keys stored negated)
    i = size
    keys[i] = sign * key
    wts[i] = w
    while i > 0:
        p = (i - 1) // 2
        if keys[p] >= keys[i]:
            break
        keys[p], keys[i] = keys[i], keys[p]
        wts[p], wts[i] = wts[i], wts[p]
        i = p
    return size + 1


@njit(cache=True)
def _pop(keys, wts, size):
    size -= 1
    keys[0] = keys[size]
    wts[0] = wts[size]
    i = 0
    while True:
        a = 2 * i + 1
        if a >= size:
            break
        b = a + 1
        c = a
        if b < size and keys[b] > keys[a]:
            c = b
        if keys[i] >= keys[c]:
            break
        keys[c], keys[i] = keys[i], keys[c]
        wts[c], wts[i] = wts[i], wts[c]
        i = c
    return size


@njit(cache=True)
def _solve_dual(pos, mass, penalty):
    n = pos.shape[0]
    cap = 4 * n + 8
    lk = np.empty(cap)
    lw = np.empty(cap, dtype=np.int64)
    rk = np.empty(cap)
    rw = np.empty(cap, dtype=np.int64)
    nl = 0
    nr = 0
    off_l = 0.0
    off_r = 0.0
    m = 0.0
    for p in range(n):
        if p > 0:
            g = pos[p] - pos[p - 1]
            off_l -= g
            off_r += g
        # phi_p in [0, 1]: penalty*(0 - h)_+ and penalty*(h - 1)_+ (never trigger moves)
        nl = _push(lk, lw, nl, 0.0 - off_l, penalty, 1.0)
        nr = _push(rk, rw, nr, 1.0 - off_r, penalty, -1.0)
        c = -mass[p]  # add c * h to U
        if c > 0:
            t_rem = c
            while t_rem > 0:
                x = lk[0] + off_l
                w = lw[0]
                t = w if w < t_rem else t_rem
                if t == w:
                    nl = _pop(lk, lw, nl)
                else:
                    lw[0] = w - t
                nr = _push(rk, rw, nr, x - off_r, t, -1.0)
                m += t * x
                t_rem -= t
        elif c < 0:
            t_rem = -c
            while t_rem > 0:
                x = -rk[0] + off_r
                w = rw[0]
                t = w if w < t_rem else t_rem
                if t == w:
                    nr = _pop(rk, rw, nr)
                else:
                    rw[0] = w - t
                nl = _push(lk, lw, nl, x - off_l, t, 1.0)
                m -= t * x
                t_rem -= t
    return -m


def truncated_w1_1d(x, y):
    """Exact min over couplings of E min(|X - Y|, 1) for uniform weights on x and y."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    nx, ny = len(x), len(y)
    g = np.gcd(nx, ny)
    sx, sy = ny // g, nx // g
    pos = np.concatenate([x, y])
    mass = np.concatenate([np.full(nx, sx, dtype=np.int64), np.full(ny, -sy, dtype=np.int64)])
    order = np.argsort(pos, kind="stable")
    total = nx * sx
    val = _solve_dual(pos[order], mass[order], np.int64(total + 1))
    return max(val / total, 0.0)


def truncated_w1_signed(pos, signed_mass, resolution=2 ** 40):
    """Truncated W1 between the positive and negative parts of a balanced signed
    measure on the points ``pos`` (masses are rounded to multiples of 1/resolution)."""
    pos = np.asarray(pos, dtype=float).ravel()
    w = np.asarray(signed_mass, dtype=float).ravel()
    scale = resolution / max(np.sum(np.abs(w)), 1e-300)
    q = np.rint(w * scale).astype(np.int64)
    excess = int(q.sum())
    if excess:
        k = int(np.argmax(np.abs(q)))
        q[k] -= excess
    order = np.argsort(pos, kind="stable")
    total = int(q[q > 0].sum())
    if total == 0:
        return 0.0
    val = _solve_dual(pos[order], q[order], np.int64(total + 1))
    return max(val / scale, 0.0)
