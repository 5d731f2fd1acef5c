import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from kaclab.chaotic_init import (DensitySpec, InitSpec, SphereSpec, kac_sphere_marginal,
                                 kac_sphere_marginal_w1, marginal_samples,
                                 sample_conditioned_chain, sample_conditioned_product,
                                 sample_uniform_boltzmann_sphere, sample_uniform_kac_sphere)
from kaclab.kernels import InvalidInput

BIMODAL = DensitySpec.mixture([0.5, 0.5], [[-0.8], [0.8]], [0.36, 0.36])

# quadrature of the N = 3 Kac-sphere marginal of the bimodal product (frozen):
# F_1(v) ~ f(v) * mean over phi of f(r cos phi) f(r sin phi), r^2 = 3 - v^2
N3_M4 = 1.6309798053514657
N3_CDF_HALF = 0.6120945509358271


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 300), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_boltzmann_sphere_residuals(N, d, seed):
    v = sample_uniform_boltzmann_sphere(N, d, np.random.default_rng(seed))
    assert np.linalg.norm(v.sum(0)) < 1e-9 * N
    assert abs(np.sum(v * v) - N * d) < 1e-9 * N


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 300), st.floats(0.1, 10), st.integers(0, 2 ** 32 - 1))
def test_kac_sphere_residual(N, E, seed):
    v = sample_uniform_kac_sphere(N, np.random.default_rng(seed), E)
    assert v.shape == (N, 1)
    assert abs(np.sum(v * v) - N * E) < 1e-9 * N * E


def test_conditioned_chain_stays_on_sphere():
    f = DensitySpec.bkw(3, 0.6)
    s = sample_conditioned_chain(f, SphereSpec("boltzmann", 40, 3), np.random.default_rng(0),
                                 n_samples=5)
    for v in s:
        assert np.linalg.norm(v.sum(0)) < 1e-9 * 40
        assert abs(np.sum(v * v) - 120) < 1e-9 * 40


def test_conditioned_n3_matches_quadrature():
    s = sample_conditioned_chain(BIMODAL, SphereSpec("kac", 3, 1), np.random.default_rng(1),
                                 n_samples=40000)
    x = s[:, :, 0].ravel()
    assert abs(np.mean(x ** 4) - N3_M4) < 0.02
    assert abs(np.mean(x < 0.5) - N3_CDF_HALF) < 0.01


def test_gaussian_conditioning_is_uniform():
    rng = np.random.default_rng(2)
    sph = SphereSpec("kac", 20, 1)
    a = sample_conditioned_chain(DensitySpec.gaussian(1), sph, rng, n_samples=3000)[:, 0, 0]
    b = np.array([sample_uniform_kac_sphere(20, rng)[0, 0] for _ in range(3000)])
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_fourier_oracle_gaussian_is_sphere_marginal():
    # first coordinate of the uniform law on the sphere of radius sqrt(N)
    N = 24
    v = np.linspace(-3, 3, 13)
    exact = (1 - v ** 2 / N) ** ((N - 3) / 2)
    exact /= integrate.quad(lambda x: (1 - x * x / N) ** ((N - 3) / 2), -math.sqrt(N),
                            math.sqrt(N))[0]
    np.testing.assert_allclose(kac_sphere_marginal(DensitySpec.gaussian(1), N, v), exact,
                               rtol=1e-8, atol=1e-12)


def test_fourier_oracle_vs_chain_n16():
    s = sample_conditioned_chain(BIMODAL, SphereSpec("kac", 16, 1), np.random.default_rng(3),
                                 n_samples=20000, n_thin=16)
    x = s[:, 0, 0]
    grid = np.linspace(-4, 4, 801)
    dens = kac_sphere_marginal(BIMODAL, 16, grid, n_norm=2001)
    cdf = integrate.cumulative_trapezoid(dens, grid, initial=0)
    for q in (-1.0, -0.4, 0.0, 0.7):
        assert abs(np.mean(x < q) - np.interp(q, grid, cdf)) < 0.02


def test_sphere_marginal_w1_scales_like_inverse_N():
    # frozen oracle values; the product of the two is N * W1 ~ 0.225
    w32 = kac_sphere_marginal_w1(BIMODAL, 32)
    w256 = kac_sphere_marginal_w1(BIMODAL, 256)
    assert w32 == pytest.approx(0.00718, rel=0.02)
    assert math.log(w256 / w32) / math.log(8) == pytest.approx(-1.0, abs=0.05)


def test_density_normalization_and_moments():
    rng = np.random.default_rng(5)
    for f in (BIMODAL, DensitySpec.box(1, math.sqrt(3)), DensitySpec.bkw(1, 0.7),
              DensitySpec.gaussian(1, 2.0)):
        lim = f.half_width if f.kind == "box" else 20
        mass = integrate.quad(lambda x: f.density([[x]])[0], -lim, lim, limit=200)[0]
        assert mass == pytest.approx(1.0, abs=1e-7)
        x = f.sample(200000, rng)
        assert np.mean(x ** 2) == pytest.approx(f.energy(), rel=0.02)


def test_ppf_inverts_sampling():
    for f in (BIMODAL, DensitySpec.bkw(1, 0.6), DensitySpec.box(1, 2.0)):
        q = f.ppf(np.array([0.1, 0.5, 0.9]))
        x = f.sample(100000, np.random.default_rng(6))[:, 0]
        np.testing.assert_allclose([np.mean(x < t) for t in q], [0.1, 0.5, 0.9], atol=0.01)


def test_normalization_preconditions():
    off = DensitySpec.gaussian(1, 2.0)
    with pytest.raises(InvalidInput):
        sample_conditioned_chain(off, SphereSpec("kac", 8, 1), np.random.default_rng(0))
    with pytest.raises(InvalidInput):
        sample_conditioned_chain(DensitySpec.point(1), SphereSpec("kac", 8, 1),
                                 np.random.default_rng(0), require_normalized=False)
    with pytest.raises(InvalidInput):
        SphereSpec("kac", 8, 3)
    with pytest.raises(InvalidInput):
        SphereSpec("boltzmann", 1, 3)


def test_two_particle_kac_circle_unnormalized():
    # N = 2: the sphere is a circle; with f = N(0, 2) conditioning still gives
    # the uniform law on it, so v_1 = sqrt(2) cos(phi) is arcsine distributed
    s = sample_conditioned_chain(DensitySpec.gaussian(1, 2.0), SphereSpec("kac", 2, 1),
                                 np.random.default_rng(7), n_samples=5000, n_thin=4,
                                 require_normalized=False)
    x = s[:, 0, 0] / math.sqrt(2)
    assert stats.kstest(x, stats.arcsine(loc=-1, scale=2).cdf).pvalue > 1e-3


def test_conditioned_product_state():
    st0 = sample_conditioned_product(DensitySpec.gaussian(3), SphereSpec("boltzmann", 10, 3),
                                     np.random.default_rng(8))
    assert st0.N == 10 and st0.constraint["sphere"] == "boltzmann"


def test_init_spec_roundtrip_and_dims():
    spec = InitSpec("conditioned", BIMODAL, sphere="kac")
    assert InitSpec.from_dict(spec.to_dict()) == spec
    assert InitSpec("uniform_sphere", sphere="kac").d == 1
    assert InitSpec("uniform_sphere").d == 3
    with pytest.raises(InvalidInput):
        InitSpec("product")


def test_marginal_samples_shapes():
    data = np.arange(2 * 6 * 3, dtype=float).reshape(2, 6, 3)
    assert marginal_samples(data, 2).shape == (2, 2, 3)
    pooled = marginal_samples(data, 2, pooled=True)
    assert pooled.shape == (6, 2, 3)
    np.testing.assert_array_equal(pooled[1], data[0, 2:4])
    with pytest.raises(InvalidInput):
        marginal_samples(data, 7)
