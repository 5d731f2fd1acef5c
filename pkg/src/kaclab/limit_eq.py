"""Reference solutions of the homogeneous Boltzmann equation.

Units: mean velocity 0 and unit variance per component, so the equilibrium
is the standard Gaussian in d dimensions and the energy per particle is d.

For Maxwell-type kernels the fourth moment obeys a closed linear equation
dM4/dt = -lam4 (M4 - (d+2)/d M2^2).  ``lam4`` depends on the angular
convention and the time scale, and is calibrated here by quadrature of the
collision integral instead of being copied from a table.  The BKW profile

    f_K(v) = (2 pi K)^(-d/2) exp(-|v|^2 / 2K) [A(K) + B(K) |v|^2]

is an exact solution when K(t) = 1 - (1 - K_min) exp(-lam4/2 (t - t0)), with
K_min = d/(d+2) the smallest K for which f_K stays nonnegative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .kernels import CollisionKernel, InvalidInput, angular_mass, sphere_area


class OutOfValidity(ValueError):
    """Requested time precedes the validity start of a reference."""


class Unsupported(ValueError):
    """Operation not available for this kernel or reference."""


@dataclass(frozen=True)
class ReferenceSolution:
    kind: str  # "maxwellian" | "bkw" | "moments"
    d: int = 3
    lam: float | None = None  # K-rate (bkw) or fourth-moment rate (moments)
    t0: float = 0.0
    m2: float | None = None
    m4: float | None = None
    kernel: dict = field(default_factory=dict)
    time_scale: str = "ordered"

    def to_dict(self):
        return {"kind": self.kind, "d": self.d, "lam": self.lam, "t0": self.t0, "m2": self.m2,
                "m4": self.m4, "kernel": self.kernel, "time_scale": self.time_scale,
                "normalization": {"mean": 0.0, "variance_per_component": 1.0}}

    @classmethod
    def from_dict(cls, data):
        keys = ("kind", "d", "lam", "t0", "m2", "m4", "kernel", "time_scale")
        return cls(**{k: data[k] for k in keys if k in data})


def maxwellian_density(v, d=None):
    """Standard Gaussian density; ``v`` has shape (..., d)."""
    x = np.asarray(v, dtype=float)
    if d is None:
        d = x.shape[-1] if x.ndim else 1
    r2 = np.sum(x * x, axis=-1) if x.ndim else x * x
    return (2 * math.pi) ** (-d / 2.0) * np.exp(-0.5 * r2)


# ---------------------------------------------------------------------------
# BKW profile

def bkw_min_K(d: int) -> float:
    return d / (d + 2.0)


def bkw_coefficients(K, d):
    a = ((d + 2) * K - d) / (2.0 * K)
    b = (1.0 - K) / (2.0 * K * K)
    return a, b


def bkw_profile(K, v, d=None):
    x = np.asarray(v, dtype=float)
    if d is None:
        d = x.shape[-1]
    if K < bkw_min_K(d) - 1e-15 or K > 1.0:
        raise OutOfValidity(f"BKW shape K={K} outside [{bkw_min_K(d)}, 1]")
    r2 = np.sum(x * x, axis=-1)
    a, b = bkw_coefficients(K, d)
    return (2 * math.pi * K) ** (-d / 2.0) * np.exp(-0.5 * r2 / K) * (a + b * r2)


def bkw_K(ref: ReferenceSolution, t: float) -> float:
    if ref.kind != "bkw":
        raise Unsupported("not a BKW reference")
    if t < ref.t0:
        raise OutOfValidity(f"t={t} precedes the BKW validity start t0={ref.t0}")
    kmin = bkw_min_K(ref.d)
    return 1.0 - (1.0 - kmin) * math.exp(-ref.lam * (t - ref.t0))


def bkw_density(ref: ReferenceSolution, t, v):
    return bkw_profile(bkw_K(ref, t), v, ref.d)


def _bkw_envelope(K, d, s2):
    """sup_v f_K(v) / N(0, s2 I)(v) for the Gaussian proposal with variance s2 > K."""
    a, b = bkw_coefficients(K, d)
    alpha = 0.5 * (1.0 / K - 1.0 / s2)
    x = 0.0
    if b > 0:
        x = max(0.0, 1.0 / alpha - a / b)
    return (s2 / K) ** (d / 2.0) * math.exp(-alpha * x) * (a + b * x)


def _proposal_var(K):
    return 2.0 * K


def bkw_acceptance_rate(ref: ReferenceSolution, t) -> float:
    """Acceptance probability of the Gaussian-majorant rejection sampler."""
    K = bkw_K(ref, t)
    return 1.0 / _bkw_envelope(K, ref.d, _proposal_var(K))


def sample_bkw_profile(K, d, n, rng):
    """Exact draws from f_K by rejection from N(0, 2K I)."""
    if K >= 1.0:
        return rng.standard_normal((n, d))
    s2 = _proposal_var(K)
    M = _bkw_envelope(K, d, s2)
    out = np.empty((n, d))
    filled = 0
    while filled < n:
        m = int(1.2 * M * (n - filled)) + 16
        x = rng.standard_normal((m, d)) * math.sqrt(s2)
        ratio = bkw_profile(K, x, d) / maxwellian_density(x / math.sqrt(s2), d) * s2 ** (d / 2.0)
        keep = x[rng.random(m) * M < ratio]
        take = min(len(keep), n - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out


def bkw_sample(ref: ReferenceSolution, t, rng, size=1):
    return sample_bkw_profile(bkw_K(ref, t), ref.d, size, rng)


def radial_moment(density_r2, d, order):
    """int |v|^order f(v) dv for an isotropic f given as a function of |v|^2."""
    c = sphere_area(d)
    val, _ = integrate.quad(lambda r: c * r ** (d - 1 + order) * density_r2(r * r), 0, np.inf,
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def bkw_moment(ref, t, order):
    K = bkw_K(ref, t)
    d = ref.d
    a, b = bkw_coefficients(K, d)
    return radial_moment(
        lambda r2: (2 * math.pi * K) ** (-d / 2.0) * math.exp(-0.5 * r2 / K) * (a + b * r2),
        d, order)


def bkw_relative_entropy(ref, t):
    """H(f_t | gamma) = int f log(f / gamma), by radial quadrature."""
    K = bkw_K(ref, t)
    d = ref.d
    a, b = bkw_coefficients(K, d)

    def integrand(r):
        r2 = r * r
        p = a + b * r2
        if p <= 0:
            return 0.0
        logf = -0.5 * d * math.log(2 * math.pi * K) - 0.5 * r2 / K + math.log(p)
        logg = -0.5 * d * math.log(2 * math.pi) - 0.5 * r2
        f = math.exp(logf)
        return sphere_area(d) * r ** (d - 1) * f * (logf - logg)

    val, _ = integrate.quad(integrand, 0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)
    return val


# ---------------------------------------------------------------------------
# collision-integral quadrature and the fourth-moment equation

def _mean_v4_after_collision(v, w, kernel, d):
    """Angular average of |v'|^4 for arrays of pre-collisional pairs (n, d)."""
    V = 0.5 * (v + w)
    u = v - w
    r = np.linalg.norm(u, axis=1)
    if d == 1:
        # Kac rotation by a uniform angle; 16 equispaced angles are exact here
        th = 2 * math.pi * np.arange(16) / 16
        c, s = np.cos(th)[None, :], np.sin(th)[None, :]
        vp = c * v[:, :1] - s * w[:, :1]
        return np.mean(vp ** 4, axis=1)
    base = np.sum(V * V, axis=1) + 0.25 * r * r
    if kernel.variant != "true_maxwell":
        # +/- e_k is a spherical 3-design; |v'|^4 has degree 2 in sigma
        acc = np.zeros(len(v))
        for k in range(d):
            for sgn in (1.0, -1.0):
                acc += (base + sgn * r * V[:, k]) ** 2
        return acc / (2 * d)
    # sigma = cos(t) uhat + sin(t) omega, omega uniform on the sphere orthogonal to uhat
    nodes, weights = np.polynomial.legendre.leggauss(200)
    lo, hi = kernel.eps, math.pi
    theta = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    dens = theta ** (-1.0 - kernel.nu) * (np.sin(theta) / theta) ** (d - 2)
    wt = weights * dens
    wt /= wt.sum()
    safe = np.where(r > 0, r, 1.0)
    uhat = u / safe[:, None]
    Vu = np.sum(V * uhat, axis=1)
    Vperp2 = np.sum(V * V, axis=1) - Vu ** 2
    # E[(V.omega)^2] = |V_perp|^2 / (d - 1); E[V.omega] = 0
    c1 = np.sum(wt * np.cos(theta))
    c2 = np.sum(wt * np.cos(theta) ** 2)
    s2 = np.sum(wt * np.sin(theta) ** 2)
    # |v'|^2 = base + r (cos t Vu + sin t V.omega)
    mean_sq_dot = c2 * Vu ** 2 + s2 * Vperp2 / (d - 1)
    return base ** 2 + 2 * base * r * c1 * Vu + r * r * mean_sq_dot


def _gauss_hermite_pairs(scales, d, n_nodes=4):
    """Nodes/weights for (v, w) iid from the isotropic scale mixture of N(0, s^2 I)."""
    x, wts = np.polynomial.hermite_e.hermegauss(n_nodes)
    wts = wts / wts.sum()
    grids = np.meshgrid(*([x] * (2 * d)), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wg = np.meshgrid(*([wts] * (2 * d)), indexing="ij")
    w = np.prod(np.stack([g.ravel() for g in wg], axis=1), axis=1)
    out_v, out_w, out_wt = [], [], []
    m = len(scales)
    for s1 in scales:
        for s2 in scales:
            out_v.append(pts[:, :d] * s1)
            out_w.append(pts[:, d:] * s2)
            out_wt.append(w / (m * m))
    return np.concatenate(out_v), np.concatenate(out_w), np.concatenate(out_wt)


def collision_moment_rate(kernel, scales, d=3, time_scale="ordered"):
    """<Q(f), |v|^4> for the equal-weight scale mixture of centered Gaussians."""
    if not kernel.is_maxwell:
        raise Unsupported("moment equations do not close for hard spheres")
    v, w, wt = _gauss_hermite_pairs(scales, d)
    gain = _mean_v4_after_collision(v, w, kernel, d)
    loss = np.sum(v * v, axis=1) ** 2
    kappa = (2.0 if time_scale == "ordered" else 1.0) * angular_mass(kernel, d)
    return kappa * float(np.sum(wt * (gain - loss)))


def _mixture_m4(scales, d):
    return float(np.mean([d * (d + 2) * s ** 4 for s in scales]))


def calibrate_relaxation_rate(kernel, d=3, time_scale="ordered"):
    """Fourth-moment relaxation rate lam4 from the collision integral.

    Two isotropic Gaussian scale mixtures with the same energy but different
    fourth moments are pushed through the quadrature; the closed equation is
    linear in M4, so the slope of <Q, |v|^4> in M4 is -lam4.
    """
    if not kernel.is_maxwell:
        raise Unsupported("moment equations do not close for hard spheres")
    states = [(1.0,), (math.sqrt(0.5), math.sqrt(1.5)), (math.sqrt(0.2), math.sqrt(1.8))]
    m4 = np.array([_mixture_m4(s, d) for s in states])
    q = np.array([collision_moment_rate(kernel, s, d, time_scale) for s in states])
    slope, _ = np.polyfit(m4, q, 1)
    return float(-slope)


def moment_ode(kernel, initial_moments, t, d=3, time_scale="ordered", lam4=None):
    """(M2, M4) at time(s) t for isotropic data under a Maxwell-type kernel."""
    if not kernel.is_maxwell:
        raise Unsupported("moment equations do not close for hard spheres; use an empirical "
                          "large-N reference instead")
    m2, m4 = (float(x) for x in initial_moments)
    if lam4 is None:
        lam4 = calibrate_relaxation_rate(kernel, d, time_scale)
    eq = (d + 2.0) / d * m2 * m2
    t = np.asarray(t, dtype=float)
    m4_t = eq + (m4 - eq) * np.exp(-lam4 * t)
    return np.broadcast_to(m2, t.shape).astype(float), m4_t


def maxwellian_reference(d=3):
    return ReferenceSolution("maxwellian", d)


def bkw_reference(kernel=None, d=3, time_scale="ordered", t0=0.0):
    """BKW solution started at its extremal profile K = d/(d+2) at time t0."""
    kernel = kernel or CollisionKernel.mg()
    lam4 = calibrate_relaxation_rate(kernel, d, time_scale)
    return ReferenceSolution("bkw", d, 0.5 * lam4, float(t0), kernel=kernel.to_dict(),
                             time_scale=time_scale)


def bkw_reference_from_K(K0, kernel=None, d=3, time_scale="ordered"):
    """BKW solution whose profile at t = 0 has shape K0 (t0 <= 0 is solved for)."""
    kmin = bkw_min_K(d)
    if not kmin <= K0 < 1.0:
        raise InvalidInput(f"K0 must lie in [{kmin}, 1)")
    ref = bkw_reference(kernel, d, time_scale, 0.0)
    t0 = -math.log((1.0 - kmin) / (1.0 - K0)) / ref.lam
    return ReferenceSolution("bkw", d, ref.lam, t0, kernel=ref.kernel, time_scale=time_scale)


def moment_reference(kernel, m2, m4, d=3, time_scale="ordered"):
    lam4 = calibrate_relaxation_rate(kernel, d, time_scale)
    return ReferenceSolution("moments", d, lam4, 0.0, m2, m4, kernel.to_dict(), time_scale)


# ---------------------------------------------------------------------------
# drawing from references

class EmpiricalReference:
    """Pooled one-particle law of a large simulation, used where no closed form exists."""

    def __init__(self, ensemble):
        self.ensemble = ensemble
        self.d = ensemble.d
        self.grid = np.asarray(ensemble.grid)

    def pooled(self, t):
        k = int(np.argmin(np.abs(self.grid - t)))
        if abs(self.grid[k] - t) > 1e-12:
            raise OutOfValidity(f"t={t} is not on the reference grid")
        return self.ensemble.data[:, k].reshape(-1, self.d)

    def to_dict(self):
        return {"kind": "empirical", "N": self.ensemble.N, "R": self.ensemble.R,
                "base_seed": self.ensemble.base_seed}


def sample_reference(ref, t, n, rng):
    """n i.i.d. one-particle velocities from ``ref`` at time t."""
    if isinstance(ref, ReferenceSolution):
        if ref.kind == "maxwellian":
            return rng.standard_normal((n, ref.d))
        if ref.kind == "bkw":
            return bkw_sample(ref, t, rng, n)
        raise Unsupported(f"cannot sample a {ref.kind!r} reference")
    if isinstance(ref, EmpiricalReference):
        pool = ref.pooled(t)
        return pool[rng.integers(0, len(pool), n)]
    if hasattr(ref, "sample"):
        return ref.sample(n, rng)
    raise InvalidInput(f"unsupported reference {ref!r}")


def reference_dim(ref):
    return ref.d


def reference_quantiles(ref, t, probs):
    """Quantile function of a one-dimensional reference (used for quasi-exact W1)."""
    probs = np.asarray(probs, dtype=float)
    if isinstance(ref, ReferenceSolution):
        if ref.d != 1:
            raise Unsupported("quantiles need d = 1")
        if ref.kind == "maxwellian":
            return special.ndtri(probs)
        if ref.kind == "bkw":
            K = bkw_K(ref, t)
            grid = np.linspace(-12, 12, 200001)
            cdf = integrate.cumulative_trapezoid(bkw_profile(K, grid[:, None], 1), grid,
                                                 initial=0.0)
            cdf /= cdf[-1]
            return np.interp(probs, cdf, grid)
        raise Unsupported(f"no quantiles for {ref.kind!r}")
    if hasattr(ref, "ppf"):
        return ref.ppf(probs)
    raise Unsupported(f"no quantiles for {ref!r}")
