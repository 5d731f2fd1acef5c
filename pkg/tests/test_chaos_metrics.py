import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from kaclab.chaos_metrics import (CSV_COLUMNS, ChaosReport, entropy_knn, exp_decay_fit,
                                  fisher_rel, lln_rate_fit, omega_N, omega_inf, omega_j,
                                  one_particle_moments, rel_entropy_to_gaussian, w1_empirical)
from kaclab.kernels import InvalidInput
from kaclab.limit_eq import maxwellian_reference


class TwoPoint:
    """Uniform law on {-1, 1}; a reference with exact samples."""

    d = 1

    def sample(self, n, rng):
        return rng.choice([-1.0, 1.0], size=(n, 1))


def test_fully_correlated_pair_example():
    # both particles equal and uniform on {-1, 1}: one-particle marginals are
    # exact, the pair law sits on the diagonal and is 1/4 away from the product
    diag = np.array([[[-1.0], [-1.0]], [[-1.0], [-1.0]], [[1.0], [1.0]], [[1.0], [1.0]]])
    prod = np.array([[[a], [b]] for a in (-1.0, 1.0) for b in (-1.0, 1.0)])
    assert float(w1_empirical(diag, prod)) == pytest.approx(0.25)
    assert float(w1_empirical(diag[:, :1], prod[:, :1])) == 0.0


def test_fully_correlated_omega():
    rng = np.random.default_rng(0)
    s = rng.choice([-1.0, 1.0], size=(2000, 1, 1))
    ens = np.repeat(s, 2, axis=1)[None]  # (1, R, 2, 1)
    ens = ens.reshape(2000, 2, 1)
    o2 = omega_j(ens, TwoPoint(), 2, n_boot=5)
    o1 = omega_j(ens, TwoPoint(), 1, n_boot=5)
    assert o2.value == pytest.approx(0.25, abs=4 * o2.stderr + 0.01)
    assert abs(o1.value) < 4 * o1.stderr + 0.01


def equicorrelated(rho, R, N, rng):
    common = rng.standard_normal((R, 1, 1))
    own = rng.standard_normal((R, N, 1))
    return math.sqrt(rho) * common + math.sqrt(1 - rho) * own


def test_omega_2_tracks_correlation():
    # exchangeable Gaussians with unit variance: one-particle marginal is exact
    # for every rho, the pair distance to the product grows with rho
    rng = np.random.default_rng(1)
    rhos = np.linspace(0, 0.8, 6)
    vals = [omega_j(equicorrelated(r, 800, 4, rng), maxwellian_reference(1), 2, n_boot=2,
                    seed=3).value for r in rhos]
    assert stats.spearmanr(rhos, vals).statistic > 0.9
    assert vals[0] < 0.02 < vals[-1]


def test_omega_j_product_is_near_zero():
    rng = np.random.default_rng(2)
    ens = rng.standard_normal((600, 8, 3))
    est = omega_j(ens, maxwellian_reference(3), 2, n_boot=8)
    assert abs(est.value) < 4 * est.stderr + 0.01
    assert est.raw > est.baseline - 4 * est.stderr
    assert est.n == 600 and est.method == "assignment"


def test_omega_j_pooled_counts():
    ens = np.random.default_rng(3).standard_normal((10, 8, 3))
    assert omega_j(ens, maxwellian_reference(3), 2, pooled=True, n_boot=2).n == 40


def test_omega_inf_population_mode_rate():
    rng = np.random.default_rng(4)
    vals = []
    for N in (64, 256, 1024):
        e = omega_inf(rng.standard_normal((40, N, 1)), maxwellian_reference(1))
        assert e.extra["mode"] == "population"
        vals.append(e.value)
    slope = np.polyfit(np.log([64, 256, 1024]), np.log(vals), 1)[0]
    assert -0.65 < slope < -0.35


def test_omega_N_guard():
    ens = np.random.default_rng(5).standard_normal((5, 32, 1))
    with pytest.raises(InvalidInput):
        omega_N(ens, maxwellian_reference(1))
    est = omega_N(ens[:, :4], maxwellian_reference(1), n_boot=2)
    assert est.extra["high_bias"]


def test_entropy_knn_gaussian():
    x = np.random.default_rng(6).standard_normal((8000, 3))
    est = entropy_knn(x)
    assert est.value == pytest.approx(1.5 * math.log(2 * math.pi * math.e), abs=0.05)
    assert est.stderr > 0
    assert abs(rel_entropy_to_gaussian(x).value) < 0.05


def test_entropy_degenerate_and_ties():
    assert entropy_knn(np.zeros((60, 2))).value == -math.inf
    x = np.repeat(np.random.default_rng(0).standard_normal((40, 1)), 4, axis=0)
    assert entropy_knn(x).extra["jittered"]
    with pytest.raises(InvalidInput):
        entropy_knn(np.zeros((10, 1)))


def test_fisher_rel_one_dimensional():
    # N(0, s2): I(f | gamma) = (1 / sqrt(s2) - sqrt(s2))^2
    x = np.random.default_rng(7).standard_normal((4000, 1)) * math.sqrt(2.0)
    est = fisher_rel(x, n_boot=2)
    assert est.value == pytest.approx(0.5, rel=0.15)


def test_one_particle_moments():
    x = np.random.default_rng(8).standard_normal((20000, 3))
    m = one_particle_moments(x, clusters=10)
    assert m["m2"] == pytest.approx(3, rel=0.02)
    assert m["m4"] == pytest.approx(15, rel=0.05)


@settings(max_examples=50)
@given(st.floats(-1.5, -0.1), st.floats(0.1, 10))
def test_rate_fit_recovers_power_law(alpha, c):
    Ns = [64, 128, 256, 512, 1024]
    fit = lln_rate_fit([(N, c * N ** alpha, 0.01 * c * N ** alpha) for N in Ns])
    assert fit.slope == pytest.approx(alpha, abs=1e-9)
    assert fit.ci_low <= alpha + 1e-9 and alpha - 1e-9 <= fit.ci_high


def test_rate_fit_noisy_ci_covers():
    rng = np.random.default_rng(9)
    hits = 0
    for _ in range(200):
        Ns = [64, 128, 256, 512, 1024]
        pts = [(N, N ** -0.5 * math.exp(0.05 * rng.standard_normal()), 0.05 * N ** -0.5)
               for N in Ns]
        f = lln_rate_fit(pts)
        hits += f.ci_low <= -0.5 <= f.ci_high
    assert 0.88 <= hits / 200 <= 0.99


def test_rate_fit_guards():
    with pytest.raises(InvalidInput):
        lln_rate_fit([(64, 1, 0.1), (128, 1, 0.1), (256, 1, 0.1)])
    with pytest.warns(UserWarning):
        f = lln_rate_fit([(64, 0.1, None), (128, -0.01, None), (256, 0.05, None),
                          (512, 0.035, None)])
    assert f.dropped == 1


def test_exp_decay_fit():
    t = np.linspace(0, 5, 11)
    rate, r2 = exp_decay_fit(t, 2.0 * np.exp(-0.7 * t))
    assert rate == pytest.approx(0.7)
    assert r2 == pytest.approx(1.0)


def test_report_roundtrip(tmp_path):
    rep = ChaosReport(meta={"kind": "x"})
    rep.add_row(t=0.0, N=16, omega_1=0.1, omega_1_se=0.01, m4=float("nan"))
    with pytest.raises(InvalidInput):
        rep.add_row(bogus=1)
    with pytest.raises(InvalidInput):
        rep.add_row(omega_1_se=-1.0)
    rep.write_json(tmp_path / "r.json")
    rep.write_csv(tmp_path / "r.csv")
    back = ChaosReport.read_json(tmp_path / "r.json")
    assert back.rows[0]["omega_1"] == 0.1 and back.meta == {"kind": "x"}
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header.split(",") == list(CSV_COLUMNS)


def test_one_particle_moments_replica_layout():
    x = np.random.default_rng(9).standard_normal((50, 40, 3))
    m = one_particle_moments(x, clusters=40)
    assert m["m2"] == pytest.approx(3, rel=0.03)
    assert m["m2_se"] > 0
