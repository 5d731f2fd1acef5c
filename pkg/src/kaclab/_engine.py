"""Compiled inner loops for the collision process and the sphere samplers.

All routines draw from a ``numpy.random.Generator`` passed in by the caller;
numba shares the generator state with numpy, so a replica's stream is the
same whether events are run here one at a time or in bulk.
"""
import math

import numpy as np
from numba import njit

MG = 0
TRUE_MAXWELL = 1
HARD_SPHERES = 2

# status codes returned by the advance_* loops
REACHED = 0
MAX_EVENTS = 1
FROZEN = 2
MAJORANT_VIOLATION = 3


@njit(cache=True)
def _unit_normal(rng, out):
    d = out.shape[0]
    while True:
        s = 0.0
        for k in range(d):
            x = rng.standard_normal()
            out[k] = x
            s += x * x
        if s > 0.0:
            s = math.sqrt(s)
            for k in range(d):
                out[k] /= s
            return


@njit(cache=True)
def truncated_polar_angle(eps, nu, d, rng):
    """Polar angle with density prop. to theta^(-1-nu) (sin(theta)/theta)^(d-2) on [eps, pi]."""
    a = eps ** (-nu)
    b = math.pi ** (-nu)
    while True:
        u = rng.random()
        theta = (a - u * (a - b)) ** (-1.0 / nu)
        if d <= 2:
            return theta
        w = (math.sin(theta) / theta) ** (d - 2)
        if rng.random() < w:
            return theta


@njit(cache=True)
def draw_sigma(u, variant, eps, nu, rng, out):
    d = u.shape[0]
    if variant != TRUE_MAXWELL:
        if d == 1:
            out[0] = 1.0 if rng.random() < 0.5 else -1.0
        else:
            _unit_normal(rng, out)
        return
    if d == 1:
        # S^0 = {u, -u}; the truncation removes theta = 0
        out[0] = -u[0]
        return
    theta = truncated_polar_angle(eps, nu, d, rng)
    # direction orthogonal to u
    while True:
        _unit_normal(rng, out)
        dot = 0.0
        for k in range(d):
            dot += out[k] * u[k]
        s = 0.0
        for k in range(d):
            out[k] -= dot * u[k]
            s += out[k] * out[k]
        if s > 1e-24:
            break
    s = math.sqrt(s)
    c = math.cos(theta)
    sn = math.sin(theta)
    for k in range(d):
        out[k] = c * u[k] + sn * out[k] / s


@njit(cache=True)
def collide(v, i, j, variant, eps, nu, rng, u, sigma):
    """Replace rows i and j of ``v`` by a post-collisional pair."""
    d = v.shape[1]
    if d == 1:
        # Kac rotation of the pair on its energy circle
        th = 2.0 * math.pi * rng.random()
        c = math.cos(th)
        s = math.sin(th)
        a = v[i, 0]
        b = v[j, 0]
        v[i, 0] = c * a - s * b
        v[j, 0] = s * a + c * b
        return
    r = 0.0
    for k in range(d):
        u[k] = v[i, k] - v[j, k]
        r += u[k] * u[k]
    if r == 0.0:
        return
    r = math.sqrt(r)
    for k in range(d):
        u[k] /= r
    draw_sigma(u, variant, eps, nu, rng, sigma)
    h = 0.5 * r
    for k in range(d):
        m = 0.5 * (v[i, k] + v[j, k])
        v[i, k] = m + h * sigma[k]
        v[j, k] = m - h * sigma[k]


@njit(cache=True)
def _dist(v, i, j):
    s = 0.0
    for k in range(v.shape[1]):
        x = v[i, k] - v[j, k]
        s += x * x
    return math.sqrt(s)


@njit(cache=True)
def _pick_pair_uniform(n, rng):
    i = int(rng.random() * n)
    if i >= n:
        i = n - 1
    j = int(rng.random() * (n - 1))
    if j >= n - 1:
        j = n - 2
    if j >= i:
        j += 1
    return i, j


@njit(cache=True)
def advance_maxwell(v, t, t_stop, total_rate, variant, eps, nu, rng, max_events):
    """Constant total rate: exponential clock plus a uniform pair.

    Returns (time, events, status).  On REACHED the pending exponential is
    discarded, which is exact by memorylessness.
    """
    n, d = v.shape
    u = np.empty(d)
    sigma = np.empty(d)
    events = 0
    if total_rate <= 0.0:
        return t, events, FROZEN
    while events < max_events:
        w = rng.standard_exponential() / total_rate
        if t + w > t_stop:
            return t_stop, events, REACHED
        t += w
        i, j = _pick_pair_uniform(n, rng)
        collide(v, i, j, variant, eps, nu, rng, u, sigma)
        events += 1
    return t, events, MAX_EVENTS


@njit(cache=True)
def _row_sums(v, rows):
    n = v.shape[0]
    for i in range(n):
        s = 0.0
        for j in range(n):
            if j != i:
                s += _dist(v, i, j)
        rows[i] = s


@njit(cache=True)
def advance_hs_ssa(v, t, t_stop, pair_factor, variant, eps, nu, rng, max_events):
    """Exact direct-method simulation with rate pair_factor * |v_i - v_j| per pair.

    Row sums S_i = sum_j |v_i - v_j| are updated in O(N) after each event and
    recomputed from scratch every N events to bound rounding drift.
    """
    n, d = v.shape
    u = np.empty(d)
    sigma = np.empty(d)
    old_i = np.empty(d)
    old_j = np.empty(d)
    rows = np.empty(n)
    _row_sums(v, rows)
    events = 0
    since_refresh = 0
    while events < max_events:
        tot = 0.0
        for k in range(n):
            tot += rows[k]
        # tot counts every unordered pair twice
        rate = 0.5 * tot * pair_factor
        if rate <= 0.0:
            return t, events, FROZEN
        w = rng.standard_exponential() / rate
        if t + w > t_stop:
            return t_stop, events, REACHED
        t += w
        x = rng.random() * tot
        i = n - 1
        acc = 0.0
        for k in range(n):
            acc += rows[k]
            if x < acc:
                i = k
                break
        while rows[i] <= 0.0 and i > 0:
            i -= 1
        y = rng.random() * rows[i]
        j = -1
        acc = 0.0
        last = -1
        for k in range(n):
            if k == i:
                continue
            dk = _dist(v, i, k)
            if dk > 0.0:
                last = k
            acc += dk
            if y < acc:
                j = k
                break
        if j < 0:
            j = last
        for k in range(d):
            old_i[k] = v[i, k]
            old_j[k] = v[j, k]
        collide(v, i, j, variant, eps, nu, rng, u, sigma)
        events += 1
        since_refresh += 1
        if since_refresh >= n:
            _row_sums(v, rows)
            since_refresh = 0
            continue
        si = 0.0
        sj = 0.0
        for k in range(n):
            if k == i or k == j:
                continue
            a_old = 0.0
            a_new = 0.0
            b_old = 0.0
            b_new = 0.0
            for c in range(d):
                x0 = v[k, c] - old_i[c]
                a_old += x0 * x0
                x1 = v[k, c] - v[i, c]
                a_new += x1 * x1
                y0 = v[k, c] - old_j[c]
                b_old += y0 * y0
                y1 = v[k, c] - v[j, c]
                b_new += y1 * y1
            a_new = math.sqrt(a_new)
            b_new = math.sqrt(b_new)
            rows[k] += a_new - math.sqrt(a_old) + b_new - math.sqrt(b_old)
            si += a_new
            sj += b_new
        dij = _dist(v, i, j)
        rows[i] = si + dij
        rows[j] = sj + dij
    return t, events, MAX_EVENTS


@njit(cache=True)
def _max_radius(v, center):
    n, d = v.shape
    for k in range(d):
        s = 0.0
        for i in range(n):
            s += v[i, k]
        center[k] = s / n
    rmax = 0.0
    for i in range(n):
        s = 0.0
        for k in range(d):
            x = v[i, k] - center[k]
            s += x * x
        if s > rmax:
            rmax = s
    return math.sqrt(rmax)


@njit(cache=True)
def advance_rejection(v, t, t_stop, pair_factor, hard_spheres, variant, eps, nu, rng,
                      max_events, max_candidates):
    """Thinning with a uniform-pair majorant.

    For hard spheres the majorant per pair is pair_factor * 2 * rmax, where
    rmax bounds |v_k - center| (the center of mass is invariant).  rmax is
    only increased between re-validations, which happen every N real events.
    Returns (time, real_events, fictitious_events, status).
    """
    n, d = v.shape
    u = np.empty(d)
    sigma = np.empty(d)
    center = np.empty(d)
    npairs = 0.5 * n * (n - 1)
    events = 0
    fictitious = 0
    rmax = _max_radius(v, center)
    since_refresh = 0
    while events < max_events and events + fictitious < max_candidates:
        if hard_spheres:
            bound = 2.0 * rmax
            majorant = npairs * pair_factor * bound
        else:
            bound = 1.0
            majorant = npairs * pair_factor
        if majorant <= 0.0:
            return t, events, fictitious, FROZEN
        w = rng.standard_exponential() / majorant
        if t + w > t_stop:
            return t_stop, events, fictitious, REACHED
        t += w
        i, j = _pick_pair_uniform(n, rng)
        if hard_spheres:
            r = _dist(v, i, j)
            if r > bound * (1.0 + 1e-12):
                return t, events, fictitious, MAJORANT_VIOLATION
            if rng.random() * bound >= r:
                fictitious += 1
                continue
        collide(v, i, j, variant, eps, nu, rng, u, sigma)
        events += 1
        if hard_spheres:
            since_refresh += 1
            if since_refresh >= n:
                rmax = _max_radius(v, center)
                since_refresh = 0
            else:
                for p in (i, j):
                    s = 0.0
                    for k in range(d):
                        x = v[p, k] - center[k]
                        s += x * x
                    s = math.sqrt(s)
                    if s > rmax:
                        rmax = s
    return t, events, fictitious, MAX_EVENTS


# ---------------------------------------------------------------------------
# densities for the sphere-conditioned samplers

GAUSS = 0
MIXTURE = 1
BOX = 2
BKW = 3
POINT = 4


@njit(cache=True)
def logpdf_point(kind, params, means, x):
    """Log density (up to a constant) of one velocity ``x``.

    params layout: GAUSS [var]; MIXTURE [w_1..w_m, var_1..var_m] with means
    rows; BOX [half_width]; BKW [K]; POINT unused.
    """
    d = x.shape[0]
    r2 = 0.0
    for k in range(d):
        r2 += x[k] * x[k]
    if kind == GAUSS:
        return -0.5 * r2 / params[0]
    if kind == BKW:
        K = params[0]
        a = ((d + 2) * K - d) / (2.0 * K)
        b = (1.0 - K) / (2.0 * K * K)
        p = a + b * r2
        if p <= 0.0:
            return -np.inf
        return math.log(p) - 0.5 * r2 / K
    if kind == BOX:
        h = params[0]
        for k in range(d):
            if abs(x[k]) > h:
                return -np.inf
        return 0.0
    if kind == MIXTURE:
        m = means.shape[0]
        best = -np.inf
        vals = np.empty(m)
        for c in range(m):
            var = params[m + c]
            s = 0.0
            for k in range(d):
                y = x[k] - means[c, k]
                s += y * y
            vals[c] = math.log(params[c]) - 0.5 * s / var - 0.5 * d * math.log(var)
            if vals[c] > best:
                best = vals[c]
        if best == -np.inf:
            return best
        acc = 0.0
        for c in range(m):
            acc += math.exp(vals[c] - best)
        return best + math.log(acc)
    # POINT: only the origin carries mass
    if r2 == 0.0:
        return 0.0
    return -np.inf


@njit(cache=True)
def sphere_mcmc(v, kind, params, means, n_steps, rng):
    """Metropolis chain targeting prod f(v_i) restricted to the sphere of ``v``.

    Proposals are pair collisions with a uniform direction (d >= 2; they keep
    momentum and energy) or Kac rotations with a uniform angle (d == 1; they
    keep energy).  Both are symmetric with respect to the surface measure.
    Returns the number of accepted moves.
    """
    n, d = v.shape
    u = np.empty(d)
    sigma = np.empty(d)
    new_i = np.empty(d)
    new_j = np.empty(d)
    accepted = 0
    for _ in range(n_steps):
        i, j = _pick_pair_uniform(n, rng)
        if d == 1:
            th = 2.0 * math.pi * rng.random()
            c = math.cos(th)
            s = math.sin(th)
            new_i[0] = c * v[i, 0] - s * v[j, 0]
            new_j[0] = s * v[i, 0] + c * v[j, 0]
        else:
            r = 0.0
            for k in range(d):
                u[k] = v[i, k] - v[j, k]
                r += u[k] * u[k]
            r = math.sqrt(r)
            _unit_normal(rng, sigma)
            for k in range(d):
                m = 0.5 * (v[i, k] + v[j, k])
                new_i[k] = m + 0.5 * r * sigma[k]
                new_j[k] = m - 0.5 * r * sigma[k]
        log_old = logpdf_point(kind, params, means, v[i]) + logpdf_point(kind, params, means, v[j])
        log_new = logpdf_point(kind, params, means, new_i) + logpdf_point(kind, params, means,
                                                                         new_j)
        log_ratio = log_new - log_old
        if log_ratio >= 0.0 or rng.random() < math.exp(log_ratio):
            for k in range(d):
                v[i, k] = new_i[k]
                v[j, k] = new_j[k]
            accepted += 1
    return accepted
