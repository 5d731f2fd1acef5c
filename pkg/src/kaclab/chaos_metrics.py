"""Quantitative chaos functionals on samples.

All transport distances use the renormalized truncated cost on (R^d)^j

    c(X, Y) = (1/j) sum_i min(|x_i - y_i|, 1),

so every distance lies in [0, 1].  Omega estimators compare simulated
samples with i.i.d. draws from a reference law and always report a same-law
baseline (the estimator applied to two independent reference clouds).
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit
from scipy import special, stats
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from ._transport import truncated_w1_1d
from .kac_process import EnsembleLaw
from .kernels import InvalidInput
from .limit_eq import reference_quantiles, sample_reference

N_EXACT = 2048
N_DIRECTIONS = 64


# ---------------------------------------------------------------------------
# point clouds and transport

@dataclass
class PointCloud:
    """n points of (R^d)^j with uniform weights; stored as an (n, j, d) array."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None, None]
        elif p.ndim == 2:
            p = p[:, None, :]
        if p.ndim != 3 or p.shape[0] < 1:
            raise InvalidInput("a point cloud needs shape (n, j, d) with n >= 1")
        if not np.all(np.isfinite(p)):
            raise InvalidInput("point cloud has non-finite entries")
        self.points = p

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def j(self):
        return self.points.shape[1]

    @property
    def d(self):
        return self.points.shape[2]

    @property
    def weights(self):
        return np.full(self.n, 1.0 / self.n)

    def flat(self):
        return self.points.reshape(self.n, -1)


def as_cloud(x):
    return x if isinstance(x, PointCloud) else PointCloud(x)


class W1Value(float):
    """A distance value carrying how it was computed."""

    method: str = "assignment"
    approximate: bool = False
    resampled: bool = False

    def __new__(cls, value, method="assignment", approximate=False, resampled=False):
        obj = super().__new__(cls, value)
        obj.method = method
        obj.approximate = approximate
        obj.resampled = resampled
        return obj

    def info(self):
        return {"value": float(self), "method": self.method, "approximate": self.approximate,
                "resampled": self.resampled}


def cost_matrix(X, Y, truncate=True):
    X, Y = as_cloud(X), as_cloud(Y)
    C = np.zeros((X.n, Y.n))
    for i in range(X.j):
        D = cdist(X.points[:, i, :], Y.points[:, i, :])
        C += np.minimum(D, 1.0) if truncate else D
    return C / X.j


def _check_compatible(X, Y):
    if (X.j, X.d) != (Y.j, Y.d):
        raise InvalidInput(f"cloud shapes differ: (j, d) = {(X.j, X.d)} vs {(Y.j, Y.d)}")


def w1_1d(X, Y, truncate=True):
    """Exact W1 between one-dimensional clouds (any sizes)."""
    X, Y = as_cloud(X), as_cloud(Y)
    _check_compatible(X, Y)
    if X.j != 1 or X.d != 1:
        raise InvalidInput("w1_1d needs j = 1 and d = 1")
    x, y = X.points.ravel(), Y.points.ravel()
    if not truncate:
        if len(x) != len(y):
            raise InvalidInput("untruncated 1-d mode needs equal sizes")
        return W1Value(float(np.mean(np.abs(np.sort(x) - np.sort(y)))), "sorted")
    return W1Value(truncated_w1_1d(x, y), "dual-1d")


def _sliced(X, Y, n_dirs, rng, truncate):
    fx, fy = X.flat(), Y.flat()
    dirs = rng.standard_normal((n_dirs, fx.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = []
    for th in dirs:
        a, b = fx @ th, fy @ th
        if truncate:
            vals.append(truncated_w1_1d(a, b))
        else:
            vals.append(np.mean(np.abs(np.sort(a) - np.sort(b))))
    return float(np.mean(vals))


def w1_empirical(X, Y, *, n_exact=N_EXACT, n_dirs=N_DIRECTIONS, rng=None, truncate=True):
    """W1 between two uniform clouds under the truncated renormalized cost.

    Exact (assignment) for n <= n_exact; exact dual solver for 1-d clouds of any
    size; otherwise the mean of 1-d truncated transports along ``n_dirs``
    random directions of R^(jd), flagged approximate.  Unequal sizes are
    handled exactly in 1-d and by subsampling the larger cloud otherwise.
    """
    X, Y = as_cloud(X), as_cloud(Y)
    _check_compatible(X, Y)
    rng = np.random.default_rng(0) if rng is None else rng
    one_d = X.j == 1 and X.d == 1
    resampled = False
    if X.n != Y.n:
        if one_d and truncate:
            return w1_1d(X, Y)
        m = min(X.n, Y.n)
        if X.n > m:
            X = PointCloud(X.points[rng.choice(X.n, m, replace=False)])
        else:
            Y = PointCloud(Y.points[rng.choice(Y.n, m, replace=False)])
        resampled = True
    n = X.n
    if n <= n_exact:
        C = cost_matrix(X, Y, truncate)
        r, c = linear_sum_assignment(C)
        return W1Value(math.fsum(C[r, c]) / n, "assignment", False, resampled)
    if one_d:
        v = w1_1d(X, Y, truncate)
        return W1Value(float(v), v.method, False, resampled)
    return W1Value(_sliced(X, Y, n_dirs, rng, truncate), "sliced", True, resampled)


# ---------------------------------------------------------------------------
# Omega estimators

@dataclass
class OmegaEstimate:
    value: float  # raw - baseline
    stderr: float
    raw: float
    raw_stderr: float
    baseline: float
    baseline_stderr: float
    n: int
    method: str
    approximate: bool = False
    note: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


_BIAS_NOTE = ("empirical-vs-empirical W1 exceeds the population distance by the sampling "
              "floor; 'value' subtracts a same-law baseline")


def _ensemble_time(ensemble, t_index, t):
    if t is not None:
        return float(t)
    if isinstance(ensemble, EnsembleLaw):
        return float(ensemble.grid[t_index])
    return 0.0


def _snapshot(ensemble, t_index):
    if isinstance(ensemble, EnsembleLaw):
        return ensemble.data[:, t_index]
    a = np.asarray(ensemble, float)
    if a.ndim == 4:
        a = a[:, t_index]
    if a.ndim == 2:
        a = a[None]
    return a


def _draw_tuples(ref, t, n, j, d, rng):
    return sample_reference(ref, t, n * j, rng).reshape(n, j, d)


def _cluster_index(n_clusters, size, rng):
    ids = rng.integers(0, n_clusters, n_clusters)
    return (ids[:, None] * size + np.arange(size)[None, :]).ravel()


def omega_j(ensemble, ref, j, t_index=-1, *, pooled=False, n_boot=20, seed=0, max_samples=None,
            n_exact=N_EXACT, n_dirs=N_DIRECTIONS, t=None):
    """W1 between the j-particle marginal and ref^{(x)j}, with baseline and bootstrap stderr.

    Samples are particles 0..j-1 of every replica (default) or all disjoint
    j-blocks of every replica (``pooled``).  Bootstrap resamples replicas.
    """
    from .chaotic_init import marginal_samples

    snap = _snapshot(ensemble, t_index)
    R, N, d = snap.shape
    tt = _ensemble_time(ensemble, t_index, t)
    X = marginal_samples(snap, j, pooled=pooled)
    cluster = (N // j) if pooled else 1
    rng = np.random.default_rng(seed)
    if max_samples is not None and X.shape[0] > max_samples:
        keep = max(1, max_samples // cluster)
        pick = np.sort(rng.choice(X.shape[0] // cluster, keep, replace=False))
        X = X[(pick[:, None] * cluster + np.arange(cluster)).ravel()]
    n = X.shape[0]
    if n < 2:
        raise InvalidInput("need at least two marginal samples")
    n_cl = n // cluster

    def w(a, b, r):
        return w1_empirical(a, b, n_exact=n_exact, n_dirs=n_dirs, rng=r)

    Y = _draw_tuples(ref, tt, n, j, d, rng)
    Yb = _draw_tuples(ref, tt, n, j, d, rng)
    dir_seed = int(rng.integers(2 ** 62))
    raw = w(X, Y, np.random.default_rng(dir_seed))
    base = w(Yb, Y, np.random.default_rng(dir_seed))
    boots = []
    for _ in range(n_boot):
        idx = _cluster_index(n_cl, cluster, rng)
        Y1 = _draw_tuples(ref, tt, n, j, d, rng)
        Y2 = _draw_tuples(ref, tt, n, j, d, rng)[_cluster_index(n_cl, cluster, rng)]
        ds = int(rng.integers(2 ** 62))
        a = float(w(X[idx], Y1, np.random.default_rng(ds)))
        b = float(w(Y2, Y1, np.random.default_rng(ds)))
        boots.append((a, b, a - b))
    boots = np.array(boots) if boots else np.zeros((0, 3))
    se = boots.std(axis=0, ddof=1) if len(boots) > 1 else np.full(3, np.nan)
    return OmegaEstimate(float(raw) - float(base), float(se[2]), float(raw), float(se[0]),
                         float(base), float(se[1]), n, raw.method, raw.approximate, _BIAS_NOTE,
                         {"j": j, "t": tt, "pooled": pooled, "n_boot": n_boot, "seed": seed})


def omega_inf(ensemble, ref, t_index=-1, *, mode="auto", n_ref=1, ref_factor=64, seed=0,
              n_exact=4096, n_dirs=N_DIRECTIONS, t=None):
    """Mean over replicas of W1(empirical measure of the N particles, ref).

    mode "empirical": the reference is an N-point i.i.d. cloud (averaged over
    ``n_ref`` draws); the baseline is the same estimator on two independent
    reference clouds.  mode "population" (d = 1 with a quantile function):
    the reference is the M-point quantile grid, M = ref_factor * N, which is
    within O(1/M) of the reference law; the baseline is that grid's own
    distance to a 16x finer grid.  "auto" picks population when available.
    """
    snap = _snapshot(ensemble, t_index)
    R, N, d = snap.shape
    tt = _ensemble_time(ensemble, t_index, t)
    rng = np.random.default_rng(seed)
    if mode == "auto":
        mode = "empirical"
        if d == 1:
            try:
                reference_quantiles(ref, tt, np.array([0.5]))
                mode = "population"
            except (ValueError, AttributeError):
                pass
    vals, bases = [], []
    approx = False
    if mode == "population":
        M = ref_factor * N
        q = reference_quantiles(ref, tt, (np.arange(M) + 0.5) / M)
        fine = reference_quantiles(ref, tt, (np.arange(16 * M) + 0.5) / (16 * M))
        base = float(w1_1d(q, fine))
        for r in range(R):
            vals.append(float(w1_1d(snap[r, :, 0], q)))
        bases = [base] * R
        method = "population-1d"
    elif mode == "empirical":
        method = "assignment"
        for r in range(R):
            acc_v, acc_b = 0.0, 0.0
            for _ in range(n_ref):
                Y = sample_reference(ref, tt, N, rng)
                Yb = sample_reference(ref, tt, N, rng)
                ds = int(rng.integers(2 ** 62))
                v = w1_empirical(snap[r], Y, n_exact=n_exact, n_dirs=n_dirs,
                                 rng=np.random.default_rng(ds))
                b = w1_empirical(Yb, Y, n_exact=n_exact, n_dirs=n_dirs,
                                 rng=np.random.default_rng(ds))
                acc_v += float(v)
                acc_b += float(b)
                approx = approx or v.approximate
                method = v.method
            vals.append(acc_v / n_ref)
            bases.append(acc_b / n_ref)
    else:
        raise InvalidInput(f"unknown omega_inf mode {mode!r}")
    vals, bases = np.array(vals), np.array(bases)
    diff = vals - bases

    def se(a):
        return float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else float("nan")

    return OmegaEstimate(float(diff.mean()), se(diff), float(vals.mean()), se(vals),
                         float(bases.mean()), se(bases), N, method, approx,
                         _BIAS_NOTE + "; stderr over replicas",
                         {"mode": mode, "t": tt, "R": R, "seed": seed})


def omega_N(ensemble, ref, t_index=-1, *, max_N=16, override=False, n_boot=20, seed=0,
            n_exact=N_EXACT, t=None):
    """W1 in (R^d)^N between replica vectors and i.i.d. product draws; always high-bias."""
    snap = _snapshot(ensemble, t_index)
    R, N, d = snap.shape
    if R < 2:
        raise InvalidInput("omega_N needs at least two replicas")
    if N > max_N and not override:
        raise InvalidInput(f"omega_N in dimension {N * d} is dominated by the sampling floor; "
                           f"refusing N = {N} > {max_N} (pass override=True to force)")
    tt = _ensemble_time(ensemble, t_index, t)
    rng = np.random.default_rng(seed)
    est = omega_j(snap, ref, N, 0, n_boot=n_boot, seed=int(rng.integers(2 ** 62)),
                  n_exact=n_exact, t=tt)
    est.note = "high-bias: " + est.note
    est.extra["high_bias"] = True
    return est


# ---------------------------------------------------------------------------
# entropy and Fisher information

@dataclass
class ScalarEstimate:
    value: float
    stderr: float
    n: int
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _flat_samples(samples):
    if isinstance(samples, PointCloud):
        return samples.flat()
    a = np.asarray(samples, float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim == 3:
        a = a.reshape(a.shape[0], -1)
    return a


def _half_sample_se(fn, x, n_boot, rng):
    """Stderr from half-samples without replacement (finite-population correction
    makes the variance of a half-sample estimate equal sigma^2 / n)."""
    n = len(x)
    if n_boot < 2:
        return float("nan")
    vals = [fn(x[rng.choice(n, n // 2, replace=False)]) for _ in range(n_boot)]
    return float(np.std(vals, ddof=1))


def _kl_entropy(x, k):
    n, d = x.shape
    tree = cKDTree(x)
    dist, _ = tree.query(x, k + 1)
    rho = dist[:, k]
    log_ball = 0.5 * d * math.log(math.pi) - special.gammaln(0.5 * d + 1)
    return float(special.digamma(n) - special.digamma(k) + log_ball + d * np.mean(np.log(rho)))


def entropy_knn(samples, k=3, n_boot=10, seed=0):
    """Kozachenko-Leonenko k-nearest-neighbour estimate of the differential entropy."""
    x = _flat_samples(samples)
    n, d = x.shape
    if n < 50:
        raise InvalidInput("entropy_knn needs at least 50 samples")
    if np.all(x == x[0]):
        return ScalarEstimate(-math.inf, 0.0, n, {"degenerate": True})
    rng = np.random.default_rng(seed)
    jittered = False
    dist, _ = cKDTree(x).query(x, k + 1)
    if np.any(dist[:, k] == 0):
        x = x + 1e-12 * rng.standard_normal(x.shape)
        jittered = True
    h = _kl_entropy(x, k)
    se = _half_sample_se(lambda y: _kl_entropy(y, k), x, n_boot, rng)
    return ScalarEstimate(h, se, n, {"k": k, "jittered": jittered})


def rel_entropy_to_gaussian(samples, k=3, n_boot=10, seed=0):
    """H(f | gamma) = -h(f) - E_f log gamma, with gamma the standard Gaussian."""
    x = _flat_samples(samples)
    n, d = x.shape

    def rel(y):
        loggam = -0.5 * d * math.log(2 * math.pi) - 0.5 * np.sum(y * y, axis=1)
        return -_kl_entropy(y, k) - float(np.mean(loggam))

    ent = entropy_knn(x, k, 0, seed)
    if not math.isfinite(ent.value):
        return ScalarEstimate(math.inf, 0.0, n, {"degenerate": True})
    if ent.extra["jittered"]:
        x = x + 1e-12 * np.random.default_rng(seed).standard_normal(x.shape)
    rng = np.random.default_rng(seed + 1)
    return ScalarEstimate(rel(x), _half_sample_se(rel, x, n_boot, rng), n,
                          {"k": k, "jittered": ent.extra["jittered"]})


@njit(cache=True, fastmath=True)
def _kde_sums_sorted(x, h):
    # x sorted by its first coordinate, so the inner sweep can stop early
    n, d = x.shape
    inv = 1.0 / (2.0 * h * h)
    cut = math.sqrt(36.0 / inv)
    f = np.zeros(n)
    g = np.zeros((n, d))
    q = np.zeros(n)
    diff = np.empty(d)
    for i in range(n):
        for k in range(i + 1, n):
            if x[k, 0] - x[i, 0] > cut:
                break
            r2 = 0.0
            for a in range(d):
                diff[a] = x[k, a] - x[i, a]
                r2 += diff[a] * diff[a]
            if r2 * inv > 36.0:
                continue
            w = math.exp(-r2 * inv)
            f[i] += w
            f[k] += w
            q[i] += w * r2
            q[k] += w * r2
            for a in range(d):
                g[i, a] += w * diff[a]
                g[k, a] -= w * diff[a]
    return f, g, q


def _kde_sums(x, h):
    """Leave-one-out Gaussian-kernel sums f_i, sum w (x_k - x_i), sum w |x_k - x_i|^2."""
    order = np.argsort(x[:, 0], kind="stable")
    f, g, q = _kde_sums_sorted(np.ascontiguousarray(x[order]), h)
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    return f[inv], g[inv], q[inv]


def _score_terms(x, h):
    f, g, q = _kde_sums(x, h)
    d = x.shape[1]
    ok = f > 0
    score = np.zeros_like(x)
    score[ok] = g[ok] / (h * h * f[ok, None])
    lap_over_f = np.zeros(len(x))
    lap_over_f[ok] = q[ok] / (h ** 4 * f[ok]) - d / (h * h)
    return score, lap_over_f, ok


def score_matching_loss(x, h):
    """Hyvarinen criterion of the leave-one-out KDE score (lower is better)."""
    score, lap, ok = _score_terms(x, h)
    s2 = np.sum(score * score, axis=1)
    # div(score) = lap f / f - |score|^2
    return float(np.mean(2.0 * (lap[ok] - s2[ok]) + s2[ok]))


def select_bandwidth(x, grid=None):
    x = np.asarray(x, float)
    scale = float(np.sqrt(np.mean(np.var(x, axis=0))))
    if grid is None:
        grid = scale * np.geomspace(0.1, 0.8, 8)
    losses = [score_matching_loss(x, h) for h in grid]
    return float(grid[int(np.argmin(losses))]), np.asarray(grid), np.asarray(losses)


def _fisher_at(x, h):
    score, _, ok = _score_terms(x, h)
    r = score[ok] + x[ok]
    return float(np.mean(np.sum(r * r, axis=1)))


def _fisher_extrapolated(x, h):
    # bias is a smooth function of u = h^2; quadratic extrapolation to u = 0
    i1 = _fisher_at(x, h)
    i2 = _fisher_at(x, h * math.sqrt(2.0))
    i3 = _fisher_at(x, h * math.sqrt(3.0))
    return 3.0 * i1 - 3.0 * i2 + i3


def fisher_rel(samples, bandwidth=None, extrapolate=True, n_boot=8, seed=0):
    """Relative Fisher information I(f | gamma) = int f |grad log f + v|^2.

    Plug-in leave-one-out Gaussian-KDE score with a bandwidth chosen by
    score-matching cross-validation; smoothing bias (a power series in h^2)
    is reduced by extrapolating three bandwidths to h = 0.  This targets the
    one-particle relative Fisher information only.
    """
    x = _flat_samples(samples)
    n = len(x)
    if n < 100:
        raise InvalidInput("fisher_rel needs at least 100 samples")
    h = select_bandwidth(x)[0] if bandwidth is None else float(bandwidth)
    fn = (lambda y: _fisher_extrapolated(y, h)) if extrapolate else (lambda y: _fisher_at(y, h))
    val = _fisher_extrapolated(x, h) if extrapolate else _fisher_at(x, h)
    se = _half_sample_se(fn, x, n_boot, np.random.default_rng(seed))
    return ScalarEstimate(val, se, n, {"bandwidth": h, "extrapolated": extrapolate})


def one_particle_moments(samples, clusters=1):
    """Second and fourth moments of |v| with stderrs over clusters of consecutive samples.

    A 3-d array (R, N, d) is read as R replicas of N one-particle velocities.
    """
    a = samples.flat() if isinstance(samples, PointCloud) else np.asarray(samples, float)
    x = a.reshape(-1, a.shape[-1]) if a.ndim == 3 else _flat_samples(a)
    r2 = np.sum(x * x, axis=1)
    n_cl = len(r2) // clusters
    per2 = r2[:n_cl * clusters].reshape(n_cl, clusters).mean(axis=1)
    per4 = (r2[:n_cl * clusters] ** 2).reshape(n_cl, clusters).mean(axis=1)

    def se(a):
        return float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else float("nan")

    return {"m2": float(r2.mean()), "m2_se": se(per2), "m4": float((r2 ** 2).mean()),
            "m4_se": se(per4)}


# ---------------------------------------------------------------------------
# rate fits and reports

@dataclass
class RateFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    n_points: int
    dropped: int = 0
    r2: float = float("nan")

    @property
    def ci(self):
        return (self.ci_low, self.ci_high)

    def to_dict(self):
        return asdict(self)


def _wls(x, y, w, level=0.95):
    W = np.sum(w)
    xm, ym = np.sum(w * x) / W, np.sum(w * y) / W
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    icpt = float(ym - slope * xm)
    resid = y - (icpt + slope * x)
    dof = len(x) - 2
    s2 = float(np.sum(w * resid ** 2) / dof) if dof > 0 else 0.0
    half = float(stats.t.ppf(0.5 + level / 2, dof) * math.sqrt(s2 / sxx)) if dof > 0 else math.inf
    tot = np.sum(w * (y - ym) ** 2)
    r2 = float(1.0 - np.sum(w * resid ** 2) / tot) if tot > 0 else 1.0
    return slope, icpt, half, r2


def lln_rate_fit(points, level=0.95, min_octaves=2.0, min_distinct=4):
    """Weighted least squares of log(estimate) on log(N); returns the slope with a CI.

    ``points`` is a sequence of (N, estimate, stderr).  Weights are the inverse
    delta-method variances of the log estimates; the CI uses Student t with
    the residual-scaled covariance.
    """
    pts = [(float(a), float(b), float(c) if c is not None else float("nan"))
           for a, b, c in points]
    Ns = sorted({p[0] for p in pts})
    if len(Ns) < min_distinct or math.log2(Ns[-1] / Ns[0]) < min_octaves - 1e-12:
        raise InvalidInput(f"rate fit needs >= {min_distinct} distinct N spanning "
                           f">= {min_octaves} octaves")
    keep = [p for p in pts if p[1] > 0 and math.isfinite(p[1])]
    dropped = len(pts) - len(keep)
    if dropped:
        warnings.warn(f"lln_rate_fit dropped {dropped} nonpositive estimate(s)")
    if len({p[0] for p in keep}) < 2:
        raise InvalidInput("fewer than two usable points after dropping nonpositive estimates")
    x = np.log([p[0] for p in keep])
    y = np.log([p[1] for p in keep])
    rel = np.array([p[2] / p[1] for p in keep])
    if np.all(np.isfinite(rel)) and np.all(rel > 0):
        w = 1.0 / rel ** 2
    else:
        w = np.ones_like(x)
    slope, icpt, half, r2 = _wls(x, y, w, level)
    return RateFit(slope, icpt, slope - half, slope + half, len(keep), dropped, r2)


def exp_decay_fit(t, values, stderr=None):
    """Semi-log fit log(value) = a - rate * t; returns (rate, R^2)."""
    t = np.asarray(t, float)
    v = np.asarray(values, float)
    ok = v > 0
    if ok.sum() < 3:
        return float("nan"), float("nan")
    w = np.ones(ok.sum())
    if stderr is not None:
        rel = np.asarray(stderr, float)[ok] / v[ok]
        if np.all(rel > 0) and np.all(np.isfinite(rel)):
            w = 1.0 / rel ** 2
    slope, _, _, r2 = _wls(t[ok], np.log(v[ok]), w)
    return -slope, r2


CSV_COLUMNS = ("t", "N", "omega_1", "omega_1_se", "omega_2", "omega_2_se", "omega_inf",
               "omega_inf_se", "omega_N", "omega_N_se", "omega_1_exact", "entropy_rel",
               "entropy_rel_se", "fisher_rel", "fisher_rel_se",
               "m2", "m2_se", "m4", "m4_se", "reference_m4", "reference_entropy_rel",
               "n_samples")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


@dataclass
class ChaosReport:
    """Per-time-point chaos estimates plus fitted rates.

    rows: dicts keyed by CSV_COLUMNS (missing keys are left empty);
    fits: name -> RateFit dict; meta: config hash, sample sizes, notes.
    """

    rows: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add_row(self, **values):
        bad = set(values) - set(CSV_COLUMNS)
        if bad:
            raise InvalidInput(f"unknown report columns {sorted(bad)}")
        for k, v in values.items():
            if k.endswith("_se") and v is not None and math.isfinite(v) and v < 0:
                raise InvalidInput(f"{k} must be nonnegative")
        self.rows.append(dict(values))

    def to_dict(self):
        def clean(o):
            if isinstance(o, float) and not math.isfinite(o):
                return str(o)
            if isinstance(o, dict):
                return {k: clean(v) for k, v in o.items()}
            if isinstance(o, (list, tuple)):
                return [clean(v) for v in o]
            if isinstance(o, np.generic):
                return clean(o.item())
            return o

        return clean({"columns": list(CSV_COLUMNS), "rows": self.rows, "fits": self.fits,
                      "meta": self.meta})

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(CSV_COLUMNS)
            for row in self.rows:
                wr.writerow([_fmt(row.get(c)) for c in CSV_COLUMNS])

    @classmethod
    def read_json(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        return cls(data.get("rows", []), data.get("fits", {}), data.get("meta", {}))
