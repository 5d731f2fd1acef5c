"""Binary collision geometry and cross-section models.

Three cross sections are supported:

* ``mg``            Maxwell molecules with Grad's cutoff, B = 1, b = 1
* ``true_maxwell``  B = 1 with a grazing singularity, truncated at angle eps
* ``hs``            hard spheres, B(z) = |z|, b = 1

For the truncated true-Maxwell model the angular profile is
b(cos t) = t^(-(d-1)-nu) on [eps, pi], so that b(cos t) sin(t)^(d-2) behaves
like t^(-1-nu) near grazing angles (non-integrable when eps -> 0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import _engine

VARIANTS = {"mg": _engine.MG, "true_maxwell": _engine.TRUE_MAXWELL, "hs": _engine.HARD_SPHERES}
ANGULAR_CONVENTIONS = ("normalized", "raw")


class InvalidInput(ValueError):
    """Raised when an argument violates an operation's precondition."""


@dataclass(frozen=True)
class CollisionKernel:
    variant: str = "mg"
    eps: float | None = None
    nu: float = 1.0
    angular_mass: str = "normalized"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidInput(f"unknown kernel variant {self.variant!r}")
        if self.angular_mass not in ANGULAR_CONVENTIONS:
            raise InvalidInput(f"angular_mass must be one of {ANGULAR_CONVENTIONS}")
        if self.variant == "true_maxwell":
            if self.eps is None or not 0.0 < self.eps < math.pi:
                raise InvalidInput("true_maxwell needs a cutoff angle eps in (0, pi)")
            if not 0.0 < self.nu < 2.0:
                raise InvalidInput("true_maxwell needs nu in (0, 2)")

    @classmethod
    def mg(cls, angular_mass="normalized"):
        return cls("mg", angular_mass=angular_mass)

    @classmethod
    def true_maxwell(cls, eps, nu=1.0, angular_mass="normalized"):
        return cls("true_maxwell", eps=float(eps), nu=float(nu), angular_mass=angular_mass)

    @classmethod
    def hard_spheres(cls, angular_mass="normalized"):
        return cls("hs", angular_mass=angular_mass)

    @property
    def code(self) -> int:
        return VARIANTS[self.variant]

    @property
    def is_maxwell(self) -> bool:
        return self.variant != "hs"

    def engine_args(self):
        eps = self.eps if self.eps is not None else 0.0
        return self.code, float(eps), float(self.nu)

    def to_dict(self):
        return {"variant": self.variant, "eps": self.eps, "nu": self.nu,
                "angular_mass": self.angular_mass}

    @classmethod
    def from_dict(cls, data):
        return cls(data.get("variant", "mg"), data.get("eps"), data.get("nu", 1.0),
                   data.get("angular_mass", "normalized"))


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^(d-1) (counting measure on S^0)."""
    return 2.0 * math.pi ** (d / 2.0) / special.gamma(d / 2.0)


def _as_velocity(x, name="velocity"):
    a = np.asarray(x, dtype=float)
    if a.ndim != 1:
        raise InvalidInput(f"{name} must be a 1-d vector")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} has non-finite components")
    return a


def _check_unit(x, name):
    a = _as_velocity(x, name)
    if abs(np.linalg.norm(a) - 1.0) > 1e-10:
        raise InvalidInput(f"{name} must be a unit vector")
    return a


def post_collision(v_i, v_j, sigma):
    """Post-collisional pair for scattering direction ``sigma``.

    v_i' = (v_i + v_j)/2 + |v_j - v_i|/2 sigma and v_j' with the opposite sign.
    """
    a = _as_velocity(v_i, "v_i")
    b = _as_velocity(v_j, "v_j")
    s = _check_unit(sigma, "sigma")
    if not (a.shape == b.shape == s.shape):
        raise InvalidInput("dimension mismatch between v_i, v_j and sigma")
    center = 0.5 * (a + b)
    half = 0.5 * np.linalg.norm(b - a)
    return center + half * s, center - half * s


def angular_mass(kernel: CollisionKernel, d: int) -> float:
    """Total angular weight m_b used in the pair rate."""
    if kernel.angular_mass == "normalized":
        return 1.0
    if kernel.variant != "true_maxwell":
        return sphere_area(d)
    if d == 1:
        return math.pi ** (-(d - 1) - kernel.nu)
    exponent = -(d - 1) - kernel.nu
    val, _ = integrate.quad(lambda t: t ** exponent * math.sin(t) ** (d - 2), kernel.eps, math.pi,
                            limit=200)
    return sphere_area(d - 1) * val


def pair_rate(kernel: CollisionKernel, v_i, v_j) -> float:
    """B(|v_i - v_j|) times the angular mass; symmetric in its velocity arguments."""
    a = _as_velocity(v_i, "v_i")
    b = _as_velocity(v_j, "v_j")
    if a.shape != b.shape:
        raise InvalidInput("dimension mismatch between v_i and v_j")
    m_b = angular_mass(kernel, a.shape[0])
    if kernel.variant == "hs":
        return float(np.sqrt(np.sum((a - b) ** 2))) * m_b
    return m_b


def deflection_density(kernel: CollisionKernel, cos_theta, d: int = 3):
    """Unnormalized angular profile b(cos theta); zero below the cutoff for true Maxwell."""
    c = np.asarray(cos_theta, dtype=float)
    if np.any(~np.isfinite(c)) or np.any(np.abs(c) > 1.0):
        raise InvalidInput("cos_theta must lie in [-1, 1]")
    if kernel.variant != "true_maxwell":
        out = np.ones_like(c)
    else:
        theta = np.arccos(c)
        with np.errstate(divide="ignore"):
            out = np.where(theta >= kernel.eps, theta ** (-(d - 1) - kernel.nu), 0.0)
    return out if out.ndim else float(out)


def sample_sigma(kernel: CollisionKernel, u_ij, rng: np.random.Generator) -> np.ndarray:
    """Draw a scattering direction with density prop. to b(sigma . u_ij) on S^(d-1)."""
    u = _check_unit(u_ij, "u_ij")
    out = np.empty_like(u)
    code, eps, nu = kernel.engine_args()
    _engine.draw_sigma(u, code, eps, nu, rng, out)
    return out
