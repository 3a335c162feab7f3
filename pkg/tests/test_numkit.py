import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from specci.numkit import (
    NumkitError,
    SingularMatrixError,
    chi2_cdf,
    chi2_quantile,
    eig_sym,
    gammainc_lower,
    inv_sqrt_spd,
    svd,
)


def _bisect_quantile(dof, p):
    # independent oracle: scipy's incomplete gamma plus plain bisection
    from scipy.special import gammainc

    lo, hi = 0.0, 10.0 * dof + 100.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gammainc(dof / 2.0, mid / 2.0) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_eig_identity():
    e = eig_sym(np.eye(3))
    np.testing.assert_allclose(e.eigenvalues, [1, 1, 1])
    np.testing.assert_allclose(e.eigenvectors.T @ e.eigenvectors, np.eye(3), atol=1e-14)


def test_eig_diagonal():
    e = eig_sym(np.diag([1.0, 3.0]))
    np.testing.assert_allclose(e.eigenvalues, [3, 1])
    np.testing.assert_allclose(np.abs(e.eigenvectors), [[0, 1], [1, 0]])


@pytest.mark.parametrize("n", [1, 2, 5, 17, 50])
def test_eig_reconstruction(n):
    rng = np.random.default_rng(n)
    a = rng.normal(size=(n, n))
    a = a + a.T
    e = eig_sym(a)
    q = e.eigenvectors
    assert np.all(np.diff(e.eigenvalues) <= 0)
    np.testing.assert_allclose(q.T @ q, np.eye(n), atol=1e-10)
    assert np.max(np.abs(q @ np.diag(e.eigenvalues) @ q.T - a)) <= 1e-10 * max(1.0, np.abs(a).max())
    np.testing.assert_allclose(e.eigenvalues, np.linalg.eigvalsh(a)[::-1], atol=1e-10)


def test_eig_sign_convention():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(6, 6))
    q = eig_sym(a + a.T).eigenvectors
    for k in range(6):
        first = q[np.nonzero(np.abs(q[:, k]) > 1e-12)[0][0], k]
        assert first > 0


def test_eig_errors():
    with pytest.raises(NumkitError):
        eig_sym(np.ones((2, 3)))
    with pytest.raises(NumkitError):
        eig_sym(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_svd_zero():
    s = svd(np.zeros((3, 2)))
    np.testing.assert_array_equal(s.singular_values, [0, 0])
    np.testing.assert_allclose(s.left.T @ s.left, np.eye(2), atol=1e-14)


def test_svd_permutation():
    s = svd([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(s.singular_values, [1, 1])


@pytest.mark.parametrize("shape", [(6, 4), (4, 6), (1, 5), (30, 30), (50, 12)])
def test_svd_reconstruction_and_gram_crosscheck(shape):
    rng = np.random.default_rng(sum(shape))
    a = rng.normal(size=shape)
    s = svd(a)
    r = min(shape)
    assert np.max(np.abs((s.left * s.singular_values) @ s.right.T - a)) <= 1e-10 * np.abs(a).max()
    np.testing.assert_allclose(s.left.T @ s.left, np.eye(r), atol=1e-10)
    np.testing.assert_allclose(s.right.T @ s.right, np.eye(r), atol=1e-10)
    gram = eig_sym(a.T @ a if shape[0] >= shape[1] else a @ a.T).eigenvalues
    np.testing.assert_allclose(s.singular_values, np.sqrt(np.clip(gram, 0, None))[:r], atol=1e-8)


def test_svd_rank_deficient():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(7, 2)) @ rng.normal(size=(2, 5))
    s = svd(a)
    assert s.singular_values[2] < 1e-12
    np.testing.assert_allclose(s.left.T @ s.left, np.eye(5), atol=1e-10)
    np.testing.assert_allclose((s.left * s.singular_values) @ s.right.T, a, atol=1e-12)


def test_svd_rejects_nonfinite():
    with pytest.raises(NumkitError):
        svd([[1.0, np.inf]])


def test_inv_sqrt_simple_cases():
    np.testing.assert_allclose(inv_sqrt_spd(np.eye(4)), np.eye(4), atol=1e-15)
    np.testing.assert_allclose(inv_sqrt_spd(np.diag([4.0, 9.0])), np.diag([0.5, 1.0 / 3.0]), atol=1e-15)


def test_inv_sqrt_random_spd():
    rng = np.random.default_rng(11)
    g = rng.normal(size=(4, 4))
    a = g @ g.T + 0.1 * np.eye(4)
    b = inv_sqrt_spd(a)
    np.testing.assert_allclose(b, b.T, atol=0)
    np.testing.assert_allclose(b @ a @ b, np.eye(4), atol=1e-8)


@pytest.mark.parametrize("cond", [1e2, 1e4, 1e6])
def test_inv_sqrt_ill_conditioned(cond):
    rng = np.random.default_rng(int(math.log10(cond)))
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    a = q @ np.diag(np.geomspace(1.0, 1.0 / cond, 6)) @ q.T
    b = inv_sqrt_spd(a, 1e-10)
    np.testing.assert_allclose(b @ (a + 1e-10 * np.eye(6)) @ b, np.eye(6), atol=1e-8)


def test_inv_sqrt_singular_names_eigenvalue():
    with pytest.raises(SingularMatrixError) as err:
        inv_sqrt_spd(np.diag([1.0, 0.0]))
    assert err.value.eigenvalue == pytest.approx(0.0, abs=1e-15)
    assert "eigenvalue" in str(err.value)


def test_chi2_spot_values():
    assert chi2_quantile(1, 0.95) == pytest.approx(3.841459, abs=1e-6)
    assert chi2_quantile(4, 0.95) == pytest.approx(9.487729, abs=1e-6)


@pytest.mark.parametrize("dof", [1, 2, 4, 9, 16, 25, 100])
@pytest.mark.parametrize("p", [1e-6, 0.05, 0.5, 0.9, 0.95, 0.99, 1 - 1e-9])
def test_chi2_quantile_inverts_cdf(dof, p):
    # bisection stops at absolute width 1e-12
    q = chi2_quantile(dof, p)
    assert q == pytest.approx(stats.chi2.ppf(p, dof), rel=1e-8, abs=1e-11)
    if p >= 0.05:
        assert abs(gammainc_lower(dof / 2, q / 2) - p) <= 1e-10


def test_chi2_quantile_lower_limit():
    for dof in (1, 3, 8):
        qs = [chi2_quantile(dof, p) for p in (1e-3, 1e-6, 1e-9, 1e-12)]
        assert np.all(np.diff(qs) <= 0)
        assert 0 <= qs[-1] < 1e-2


def test_chi2_quantile_errors():
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(NumkitError):
            chi2_quantile(3, bad)
    with pytest.raises(NumkitError):
        chi2_quantile(0, 0.5)


def test_chi2_quantile_monotone_on_grid():
    ps = np.linspace(0.01, 0.99, 40)
    for dof in (1, 2, 5, 20):
        qs = [chi2_quantile(dof, p) for p in ps]
        assert np.all(np.diff(qs) > 0)
    for p in (0.1, 0.5, 0.95):
        qs = [chi2_quantile(k, p) for k in range(1, 30)]
        assert np.all(np.diff(qs) > 0)


def test_chi2_quantile_against_monte_carlo():
    rng = np.random.default_rng(2024)
    for dof in (1, 4):
        draws = np.sum(rng.standard_normal((100_000, dof)) ** 2, axis=1)
        rate = np.mean(draws >= chi2_quantile(dof, 0.95))
        assert 0.04 <= rate <= 0.06


def test_chi2_mc_cdf_at_spot_values():
    # 10^6 normal draws: empirical CDF at the dof-1 quantile
    rng = np.random.default_rng(7)
    z = rng.standard_normal(1_000_000)
    assert np.mean(z * z <= 3.841459) == pytest.approx(0.95, abs=0.002)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 60), st.floats(0.001, 0.999))
def test_chi2_quantile_matches_bisection_oracle(dof, p):
    assert chi2_quantile(dof, p) == pytest.approx(_bisect_quantile(dof, p), abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 80.0), st.integers(1, 40))
def test_chi2_cdf_matches_scipy(x, dof):
    assert chi2_cdf(x, dof) == pytest.approx(stats.chi2.cdf(x, dof), abs=1e-12)
