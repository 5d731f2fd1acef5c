"""Initial N-particle laws: tensor products, uniform spheres, conditioned products.

Spheres are normalized as sum_i |v_i|^2 = N * E with E the energy per
particle (default d, i.e. unit variance per component).  The Boltzmann
sphere additionally imposes sum_i v_i = 0.  The Kac sphere is the d = 1
energy-only sphere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from . import _engine
from .kac_process import EnsembleLaw, VelocityState
from .kernels import CollisionKernel, InvalidInput
from ._transport import truncated_w1_signed
from .limit_eq import bkw_min_K, bkw_profile, sample_bkw_profile

DENSITY_KINDS = {"gauss": _engine.GAUSS, "mixture": _engine.MIXTURE, "box": _engine.BOX,
                 "bkw": _engine.BKW, "point": _engine.POINT}


@dataclass(frozen=True)
class DensitySpec:
    """A one-particle density on R^d.

    gauss: N(0, var I); mixture: sum_c w_c N(m_c, var_c I); box: uniform on
    [-h, h]^d; bkw: the BKW profile with shape K; point: Dirac mass at 0.
    """

    kind: str
    d: int
    var: float = 1.0
    weights: tuple = ()
    means: tuple = ()
    vars: tuple = ()
    half_width: float = 1.0
    K: float = 1.0

    def __post_init__(self):
        if self.kind not in DENSITY_KINDS:
            raise InvalidInput(f"unknown density kind {self.kind!r}")
        if self.d < 1:
            raise InvalidInput("dimension must be >= 1")
        if self.kind == "gauss" and not self.var > 0:
            raise InvalidInput("gauss needs var > 0")
        if self.kind == "box" and not self.half_width > 0:
            raise InvalidInput("box needs half_width > 0")
        if self.kind == "bkw" and not bkw_min_K(self.d) <= self.K <= 1.0:
            raise InvalidInput(f"bkw needs K in [{bkw_min_K(self.d)}, 1]")
        if self.kind == "mixture":
            w = np.asarray(self.weights, float)
            m = np.asarray(self.means, float).reshape(len(w), -1) if len(w) else np.zeros((0, 0))
            if len(w) == 0 or np.any(w <= 0) or abs(w.sum() - 1) > 1e-9:
                raise InvalidInput("mixture weights must be positive and sum to 1")
            if m.shape != (len(w), self.d) or len(self.vars) != len(w):
                raise InvalidInput("mixture means/vars do not match weights and dimension")
            if np.any(np.asarray(self.vars) <= 0):
                raise InvalidInput("mixture variances must be positive")

    # constructors -------------------------------------------------------
    @classmethod
    def gaussian(cls, d, var=1.0):
        return cls("gauss", d, var=float(var))

    @classmethod
    def mixture(cls, weights, means, vars):
        means = np.atleast_2d(np.asarray(means, float))
        if means.shape[0] != len(weights):
            means = means.T
        return cls("mixture", means.shape[1], weights=tuple(float(x) for x in weights),
                   means=tuple(tuple(float(y) for y in row) for row in means),
                   vars=tuple(float(x) for x in vars))

    @classmethod
    def box(cls, d, half_width):
        return cls("box", d, half_width=float(half_width))

    @classmethod
    def bkw(cls, d, K):
        return cls("bkw", d, K=float(K))

    @classmethod
    def point(cls, d):
        return cls("point", d)

    def to_dict(self):
        out = {"kind": self.kind, "d": self.d}
        if self.kind == "gauss":
            out["var"] = self.var
        elif self.kind == "mixture":
            out.update(weights=list(self.weights), means=[list(m) for m in self.means],
                       vars=list(self.vars))
        elif self.kind == "box":
            out["half_width"] = self.half_width
        elif self.kind == "bkw":
            out["K"] = self.K
        return out

    @classmethod
    def from_dict(cls, data):
        kind = data.get("kind")
        d = int(data.get("d", 1))
        if kind == "gauss":
            return cls.gaussian(d, data.get("var", 1.0))
        if kind == "mixture":
            return cls.mixture(data["weights"], data["means"], data["vars"])
        if kind == "box":
            return cls.box(d, data["half_width"])
        if kind == "bkw":
            return cls.bkw(d, data["K"])
        if kind == "point":
            return cls.point(d)
        raise InvalidInput(f"unknown density kind {kind!r}")

    # engine encoding ----------------------------------------------------
    def engine_args(self):
        code = DENSITY_KINDS[self.kind]
        means = np.zeros((1, self.d))
        if self.kind == "gauss":
            params = np.array([self.var])
        elif self.kind == "mixture":
            params = np.array(list(self.weights) + list(self.vars))
            means = np.asarray(self.means, float).reshape(len(self.weights), self.d)
        elif self.kind == "box":
            params = np.array([self.half_width])
        elif self.kind == "bkw":
            params = np.array([self.K])
        else:
            params = np.zeros(1)
        return code, params, np.ascontiguousarray(means)

    # densities and draws ------------------------------------------------
    def log_density(self, x):
        """Normalized log density at points x of shape (n, d)."""
        x = np.atleast_2d(np.asarray(x, float))
        d = self.d
        r2 = np.sum(x * x, axis=1)
        if self.kind == "gauss":
            return -0.5 * r2 / self.var - 0.5 * d * math.log(2 * math.pi * self.var)
        if self.kind == "box":
            inside = np.all(np.abs(x) <= self.half_width, axis=1)
            return np.where(inside, -d * math.log(2 * self.half_width), -np.inf)
        if self.kind == "bkw":
            with np.errstate(divide="ignore"):
                return np.log(bkw_profile(self.K, x, d))
        if self.kind == "mixture":
            comps = []
            for w, m, s2 in zip(self.weights, self.means, self.vars):
                y = x - np.asarray(m)
                comps.append(math.log(w) - 0.5 * np.sum(y * y, axis=1) / s2
                             - 0.5 * d * math.log(2 * math.pi * s2))
            return special.logsumexp(np.stack(comps), axis=0)
        return np.where(r2 == 0.0, 0.0, -np.inf)

    def density(self, x):
        return np.exp(self.log_density(x))

    def sample(self, n, rng):
        d = self.d
        if self.kind == "gauss":
            return rng.standard_normal((n, d)) * math.sqrt(self.var)
        if self.kind == "box":
            return rng.uniform(-self.half_width, self.half_width, (n, d))
        if self.kind == "bkw":
            return sample_bkw_profile(self.K, d, n, rng)
        if self.kind == "mixture":
            comp = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
            means = np.asarray(self.means)[comp]
            sd = np.sqrt(np.asarray(self.vars))[comp]
            return means + sd[:, None] * rng.standard_normal((n, d))
        return np.zeros((n, d))

    def mean(self):
        if self.kind == "mixture":
            return np.asarray(self.weights) @ np.asarray(self.means)
        return np.zeros(self.d)

    def energy(self):
        """E|v|^2 per particle."""
        d = self.d
        if self.kind == "gauss":
            return d * self.var
        if self.kind == "box":
            return d * self.half_width ** 2 / 3.0
        if self.kind == "bkw":
            return float(d)
        if self.kind == "mixture":
            m = np.asarray(self.means)
            return float(np.sum(np.asarray(self.weights) * (np.sum(m * m, axis=1)
                                                            + d * np.asarray(self.vars))))
        return 0.0

    def ppf(self, probs):
        """Quantile function; d = 1 only."""
        if self.d != 1:
            raise InvalidInput("quantiles need d = 1")
        p = np.asarray(probs, float)
        if self.kind == "gauss":
            return math.sqrt(self.var) * special.ndtri(p)
        if self.kind == "box":
            return self.half_width * (2 * p - 1)
        if self.kind == "point":
            return np.zeros_like(p)
        if self.kind == "mixture":
            w = np.asarray(self.weights)
            m = np.asarray(self.means)[:, 0]
            sd = np.sqrt(np.asarray(self.vars))

            def cdf(x):
                return np.sum(w * special.ndtr((x - m) / sd))

            lo, hi = m.min() - 40 * sd.max(), m.max() + 40 * sd.max()
            flat = p.ravel()
            out = np.array([optimize.brentq(lambda x: cdf(x) - q, lo, hi, xtol=1e-13)
                            if 0 < q < 1 else (-np.inf if q <= 0 else np.inf) for q in flat])
            return out.reshape(p.shape)
        # bkw: tabulated CDF
        grid = np.linspace(-12, 12, 200001)
        cdf = integrate.cumulative_trapezoid(bkw_profile(self.K, grid[:, None], 1), grid,
                                             initial=0.0)
        return np.interp(p, cdf / cdf[-1], grid)


@dataclass(frozen=True)
class SphereSpec:
    variant: str  # "kac" | "boltzmann"
    N: int
    d: int
    energy: float | None = None  # per particle; defaults to d

    def __post_init__(self):
        if self.variant not in ("kac", "boltzmann"):
            raise InvalidInput("sphere variant must be 'kac' or 'boltzmann'")
        if self.variant == "kac" and self.d != 1:
            raise InvalidInput("the Kac sphere lives in dimension 1")
        if self.N < 2:
            raise InvalidInput("a sphere needs N >= 2")
        if self.energy is not None and not self.energy > 0:
            raise InvalidInput("sphere energy must be positive")

    @property
    def E(self):
        return float(self.d if self.energy is None else self.energy)


def sample_product(f: DensitySpec, N, rng):
    if N < 1:
        raise InvalidInput("N must be >= 1")
    return f.sample(N, rng)


def _project_to_sphere(z, sphere: SphereSpec):
    if sphere.variant == "boltzmann":
        z = z - z.mean(axis=0)
    norm = math.sqrt(np.sum(z * z))
    return z * math.sqrt(sphere.N * sphere.E) / norm


def sample_uniform_kac_sphere(N, rng, energy=1.0):
    """Uniform law on {sum v_i^2 = N * energy} in R^N, returned as (N, 1)."""
    sph = SphereSpec("kac", N, 1, energy)
    return _project_to_sphere(rng.standard_normal((N, 1)), sph)


def sample_uniform_boltzmann_sphere(N, d, rng, energy=None):
    """Uniform law on {sum v_i = 0, sum |v_i|^2 = N * energy}.

    A standard Gaussian in R^(Nd) projected on the zero-momentum subspace is
    an isotropic Gaussian there, so normalizing it gives the uniform law.
    """
    sph = SphereSpec("boltzmann", N, d, energy)
    return _project_to_sphere(rng.standard_normal((N, d)), sph)


def sample_uniform_sphere(sphere: SphereSpec, rng):
    return _project_to_sphere(rng.standard_normal((sphere.N, sphere.d)), sphere)


def _check_normalized(f, sphere, tol=1e-6):
    if np.linalg.norm(f.mean()) > tol:
        raise InvalidInput("conditioning needs a centered density (mean velocity 0)")
    if abs(f.energy() - sphere.E) > tol * max(1.0, sphere.E):
        raise InvalidInput(f"conditioning needs energy per particle {sphere.E}, density has "
                           f"{f.energy():.6g}")


def _starting_point(f, sphere, rng, sweeps=200):
    if f.kind != "box":
        return sample_uniform_sphere(sphere, rng)
    # alternate between the sphere and a slightly shrunk box
    v = f.sample(sphere.N, rng)
    h = 0.999 * f.half_width
    for _ in range(sweeps):
        v = _project_to_sphere(v, sphere)
        if np.all(np.abs(v) < f.half_width):
            break
        v = np.clip(v, -h, h)
    return v


def sample_conditioned_chain(f: DensitySpec, sphere: SphereSpec, rng, n_samples=1, n_burn=None,
                             n_thin=None, require_normalized=True, max_restarts=100):
    """Metropolis draws from prod f(v_i) restricted to the sphere.

    Returns an array (n_samples, N, d) of thinned chain states.
    """
    if f.d != sphere.d:
        raise InvalidInput("density and sphere dimensions differ")
    if f.kind == "point":
        raise InvalidInput("a point mass cannot be conditioned on a sphere")
    if sphere.variant == "boltzmann" and sphere.d < 2:
        raise InvalidInput("pair moves cannot explore the Boltzmann sphere when d = 1")
    if require_normalized:
        _check_normalized(f, sphere)
    N = sphere.N
    n_burn = 50 * N if n_burn is None else int(n_burn)
    n_thin = 5 * N if n_thin is None else int(n_thin)
    code, params, means = f.engine_args()
    for _ in range(max_restarts):
        v = _starting_point(f, sphere, rng)
        if np.all(np.isfinite(f.log_density(v))):
            break
    else:
        raise InvalidInput("could not find a starting point with positive density on the sphere")
    out = np.empty((n_samples, N, sphere.d))
    _engine.sphere_mcmc(v, code, params, means, n_burn, rng)
    for s in range(n_samples):
        if s:
            _engine.sphere_mcmc(v, code, params, means, n_thin, rng)
        out[s] = v
    return out


def sample_conditioned_product(f: DensitySpec, sphere: SphereSpec, rng, kernel=None,
                               n_burn=None, require_normalized=True):
    """One configuration from the conditioned product, as a VelocityState."""
    v = sample_conditioned_chain(f, sphere, rng, 1, n_burn=n_burn,
                                 require_normalized=require_normalized)[0]
    return VelocityState(v, kernel or CollisionKernel.mg(),
                         constraint={"sphere": sphere.variant, "energy": sphere.E})


@dataclass
class InitSpec:
    """Initial datum for an ensemble: how to draw one N-particle configuration.

    kind: "product" (f tensor N), "uniform_sphere", or "conditioned".
    """

    kind: str
    density: DensitySpec | None = None
    sphere: str = "boltzmann"
    energy: float | None = None
    n_burn_factor: int = 50
    d: int | None = None

    def __post_init__(self):
        if self.kind not in ("product", "uniform_sphere", "conditioned"):
            raise InvalidInput(f"unknown init kind {self.kind!r}")
        if self.kind in ("product", "conditioned") and self.density is None:
            raise InvalidInput(f"init kind {self.kind!r} needs a density")
        if self.sphere not in ("kac", "boltzmann"):
            raise InvalidInput("sphere must be 'kac' or 'boltzmann'")
        if self.density is not None:
            if self.d is not None and self.d != self.density.d:
                raise InvalidInput("init dimension disagrees with its density")
            self.d = self.density.d
        elif self.d is None:
            self.d = 1 if self.sphere == "kac" else 3

    def sphere_spec(self, N):
        return SphereSpec(self.sphere, N, self.d, self.energy)

    def sample(self, N, rng):
        if self.kind == "product":
            return sample_product(self.density, N, rng)
        sph = self.sphere_spec(N)
        if self.kind == "uniform_sphere":
            return sample_uniform_sphere(sph, rng)
        return sample_conditioned_chain(self.density, sph, rng, 1,
                                        n_burn=self.n_burn_factor * N)[0]

    def to_dict(self):
        out = {"kind": self.kind, "sphere": self.sphere, "energy": self.energy,
               "n_burn_factor": self.n_burn_factor, "d": self.d}
        if self.density is not None:
            out["density"] = self.density.to_dict()
        return out

    @classmethod
    def from_dict(cls, data):
        dens = data.get("density")
        return cls(data["kind"], DensitySpec.from_dict(dens) if dens else None,
                   data.get("sphere", "boltzmann"), data.get("energy"),
                   int(data.get("n_burn_factor", 50)), data.get("d"))


def marginal_samples(ensemble, j, t_index=-1, pooled=False):
    """j-particle samples from an ensemble snapshot, shape (n, j, d).

    By default particles 0..j-1 of every replica (i.i.d. across replicas).
    With ``pooled`` each replica is cut into floor(N/j) disjoint j-blocks;
    blocks of one replica are exchangeable but correlated.
    """
    if isinstance(ensemble, EnsembleLaw):
        data = ensemble.data[:, t_index]
    else:
        data = np.asarray(ensemble, float)
        if data.ndim == 2:
            data = data[None]
        if data.ndim == 4:
            data = data[:, t_index]
    R, N, d = data.shape
    if not 1 <= j <= N:
        raise InvalidInput(f"need 1 <= j <= N, got j={j}, N={N}")
    if not pooled:
        return data[:, :j].copy()
    blocks = N // j
    return data[:, :blocks * j].reshape(R * blocks, j, d)


def _square_charfn(f: DensitySpec, omega):
    """E exp(i omega X^2) for X ~ f (gauss or mixture, d = 1)."""
    if f.kind == "gauss":
        comps = [(1.0, 0.0, f.var)]
    elif f.kind == "mixture":
        comps = [(w, m[0], s2) for w, m, s2 in zip(f.weights, f.means, f.vars)]
    else:
        raise InvalidInput("the sphere-marginal oracle needs a gauss or mixture density")
    out = np.zeros_like(omega, dtype=complex)
    for w, m, s2 in comps:
        z = 1.0 - 2j * omega * s2
        out += w * z ** -0.5 * np.exp(1j * omega * m * m / z)
    return out


def _sum_of_squares_density(f, k, s, total_energy):
    """Density at s of X_1^2 + ... + X_k^2 by Fourier inversion."""
    dw = math.pi / (2.0 * total_energy + 200.0)
    # |phi|^k <= (1 + 4 w^2 v^4)^(-k/4) with v the smallest component variance
    vmin = f.var if f.kind == "gauss" else min(f.vars)
    wmax = math.sqrt((1e18 ** (4.0 / k) - 1.0) / (4.0 * vmin * vmin))
    omega = np.arange(0.0, wmax + dw, dw)
    phik = _square_charfn(f, omega) ** k
    wts = np.full(len(omega), dw)
    wts[0] = 0.5 * dw
    s = np.atleast_1d(np.asarray(s, float))
    out = np.empty(len(s))
    for a in range(0, len(s), 2048):
        blk = s[a:a + 2048]
        out[a:a + 2048] = ((np.exp(-1j * np.outer(blk, omega)) * phik) @ wts).real
    return np.maximum(out / math.pi, 0.0)


def kac_sphere_marginal(f: DensitySpec, N, v, energy=1.0, n_norm=20001):
    """One-particle marginal density of the conditioned product on the Kac sphere.

    F_1(v) = f(v) h_{N-1}(N E - v^2) / Z with h_k the density of a sum of k
    squares of f-variables; Z is fixed by numerical normalization.
    """
    if f.d != 1:
        raise InvalidInput("the Kac sphere lives in dimension 1")
    if N < 16:
        raise InvalidInput("the Fourier oracle needs N >= 16 (slow decay of phi^(N-1) below)")
    tot = N * energy
    lim = math.sqrt(tot)

    def unnorm(x):
        x = np.asarray(x, float)
        val = np.zeros_like(x)
        ok = np.abs(x) < lim
        val[ok] = f.density(x[ok][:, None]) * _sum_of_squares_density(f, N - 1, tot - x[ok] ** 2,
                                                                       tot)
        return val

    width = min(lim, 12.0)
    grid = np.linspace(-width, width, n_norm)
    Z = integrate.trapezoid(unnorm(grid), grid)
    return unnorm(v) / Z


def kac_sphere_marginal_w1(f: DensitySpec, N, energy=1.0, width=10.0, n_grid=40001):
    """Population truncated W1 between the sphere marginal and f (deterministic oracle)."""
    x = np.linspace(-width, width, n_grid)
    dx = x[1] - x[0]
    p = kac_sphere_marginal(f, N, x, energy) * dx
    q = f.density(x[:, None]) * dx
    p /= p.sum()
    q /= q.sum()
    return truncated_w1_signed(x, p - q)
