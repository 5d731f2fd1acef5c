import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment, linprog

from kaclab._transport import truncated_w1_1d, truncated_w1_signed
from kaclab.chaos_metrics import PointCloud, cost_matrix, w1_1d, w1_empirical
from kaclab.kernels import InvalidInput


def brute(X, Y):
    C = cost_matrix(X, Y)
    n = C.shape[0]
    return min(sum(C[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n))) / n


def clouds(max_n=5, j=1, d=1):
    pts = st.floats(-3, 3, allow_nan=False).map(lambda v: round(v, 3))
    return st.integers(1, max_n).flatmap(lambda n: st.tuples(
        st.lists(pts, min_size=n * j * d, max_size=n * j * d),
        st.lists(pts, min_size=n * j * d, max_size=n * j * d),
    ).map(lambda ab: (np.reshape(ab[0], (n, j, d)), np.reshape(ab[1], (n, j, d)))))


def test_truncated_cost_defeats_sorted_matching():
    x, y = np.array([0.0, 1.0]), np.array([0.9, 1.9])
    assert np.mean(np.minimum(np.abs(np.sort(x) - np.sort(y)), 1)) == pytest.approx(0.9)
    assert truncated_w1_1d(x, y) == pytest.approx(0.55)
    assert w1_empirical(x, y) == pytest.approx(0.55)


@settings(max_examples=150, deadline=None)
@given(clouds(6))
def test_dual_1d_equals_brute_force(xy):
    X, Y = xy
    assert truncated_w1_1d(X.ravel(), Y.ravel()) == pytest.approx(brute(X, Y), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(clouds(4, j=2, d=2))
def test_assignment_equals_brute_force_multi(xy):
    X, Y = xy
    assert float(w1_empirical(X, Y)) == pytest.approx(brute(X, Y), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(clouds(5, d=3), st.data())
def test_metric_axioms(xy, data):
    X, Y = xy
    Z = X + data.draw(st.floats(-1, 1))
    dxy, dyx = float(w1_empirical(X, Y)), float(w1_empirical(Y, X))
    assert dxy == pytest.approx(dyx, abs=1e-12)
    assert float(w1_empirical(X, X)) == 0.0
    assert 0 <= dxy <= 1
    assert dxy <= float(w1_empirical(X, Z)) + float(w1_empirical(Z, Y)) + 1e-12


def test_dual_1d_large_vs_assignment():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(50, 400))
        x = rng.standard_normal(n) * rng.uniform(0.2, 3)
        y = rng.standard_normal(n) * rng.uniform(0.2, 3) + rng.uniform(-1, 1)
        C = np.minimum(np.abs(x[:, None] - y[None, :]), 1.0)
        r, c = linear_sum_assignment(C)
        assert truncated_w1_1d(x, y) == pytest.approx(C[r, c].mean(), abs=1e-12)


def test_dual_1d_unequal_sizes_vs_linprog():
    rng = np.random.default_rng(1)
    for nx, ny in [(3, 5), (7, 4), (6, 9)]:
        x, y = rng.normal(size=nx) * 1.5, rng.normal(size=ny)
        C = np.minimum(np.abs(x[:, None] - y[None, :]), 1.0)
        A = np.zeros((nx + ny, nx * ny))
        for i in range(nx):
            A[i, i * ny:(i + 1) * ny] = 1
        for k in range(ny):
            A[nx + k, k::ny] = 1
        b = np.concatenate([np.full(nx, 1 / nx), np.full(ny, 1 / ny)])
        lp = linprog(C.ravel(), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
        assert truncated_w1_1d(x, y) == pytest.approx(lp.fun, abs=1e-9)
        assert float(w1_empirical(x, y)) == pytest.approx(lp.fun, abs=1e-9)


def test_signed_measure_form():
    pos = np.array([0.0, 0.4, 3.0])
    assert truncated_w1_signed(pos, [0.5, -0.5, 0.0]) == pytest.approx(0.2, abs=1e-9)
    assert truncated_w1_signed(pos, [0.5, 0.0, -0.5]) == pytest.approx(0.5, abs=1e-9)


def test_untruncated_1d_mode_and_flags():
    x = np.array([0.0, 5.0])
    y = np.array([1.0, 2.0])
    assert float(w1_1d(x, y, truncate=False)) == pytest.approx(2.0)
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(300, 1, 3)), rng.normal(size=(300, 1, 3))
    v = w1_empirical(a, b, n_exact=100, n_dirs=16)
    assert v.approximate and v.method == "sliced"
    assert not w1_empirical(a, b).approximate
    assert w1_empirical(a, b[:200]).resampled
    with pytest.raises(InvalidInput):
        w1_empirical(a, rng.normal(size=(300, 2, 3)))
    with pytest.raises(InvalidInput):
        PointCloud(np.full((3, 1, 1), np.nan))
