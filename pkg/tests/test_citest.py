import json

import numpy as np
import pytest

from specci.citest import TestOutcome, decide, latent_pcov, run_test, statistic, statistic_from_features
from specci.datagen import DiscreteJoint, GaussLinConfig, gen_discrete, gen_gauss_linear
from specci.numkit import chi2_cdf, chi2_quantile
from specci.oracle import centered_basis
from specci.trainer import TrainConfig, train


def _orth(rng, k):
    q, _ = np.linalg.qr(rng.normal(size=(k, k)))
    return q


def test_zero_features():
    z = np.zeros((10, 2))
    assert statistic_from_features(z, z, np.zeros((10, 4))) == 0.0


def test_identity_cross_covariance_gives_n_times_d():
    # U = V is a whitened +-1 design, W is orthogonal to it
    n, d = 8, 2
    u = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]] * 2, dtype=float)
    w = np.column_stack([np.repeat([1.0, -1.0], 4), np.zeros(n), np.zeros(n), np.zeros(n)])
    np.testing.assert_allclose(latent_pcov(u, u, w, recenter=False)[:d, :d], np.eye(d), atol=1e-15)
    assert statistic_from_features(u, u, w) == pytest.approx(n * d, abs=1e-12)


def test_rotation_invariance():
    rng = np.random.default_rng(0)
    U, V, W = rng.normal(size=(50, 2)), rng.normal(size=(50, 2)), rng.normal(size=(50, 4))
    base = statistic_from_features(U, V, W)
    for _ in range(5):
        rot = statistic_from_features(U @ _orth(rng, 2), V @ _orth(rng, 2), W @ _orth(rng, 4))
        assert rot == pytest.approx(base, abs=1e-10)


def test_statistic_nonnegative_and_linear_in_n():
    rng = np.random.default_rng(1)
    U, V, W = rng.normal(size=(30, 2)), rng.normal(size=(30, 2)), rng.normal(size=(30, 4))
    t1 = statistic_from_features(U, V, W)
    t2 = statistic_from_features(*(np.vstack([f, f]) for f in (U, V, W)))
    assert t1 >= 0
    assert t2 == pytest.approx(2 * t1, rel=1e-12)


def test_recentering_switch():
    rng = np.random.default_rng(2)
    U, V, W = rng.normal(size=(40, 1)) + 3, rng.normal(size=(40, 1)), rng.normal(size=(40, 2))
    assert statistic_from_features(U, V, W) == pytest.approx(statistic_from_features(U - 3, V, W))
    assert statistic_from_features(U, V, W, recenter=False) != pytest.approx(statistic_from_features(U, V, W))


def test_too_few_rows():
    with pytest.raises(ValueError):
        statistic_from_features(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 2)))


def test_decide_zero_statistic():
    out = decide(0.0, 2, 0.05, 100)
    assert out.p_value == 1.0 and not out.reject and out.dof == 4


def test_decide_critical_region():
    assert decide(3.842, 1, 0.05, 10).reject
    assert not decide(3.841, 1, 0.05, 10).reject


def test_decide_boundary_rejects():
    crit = chi2_quantile(4, 0.95)
    out = decide(crit, 2, 0.05, 10)
    assert out.reject and out.statistic == out.critical_value


def test_decide_invalid_alpha():
    for a in (0.0, 1.0, -0.5):
        with pytest.raises(ValueError):
            decide(1.0, 1, a, 10)


def test_outcome_json_fields():
    rec = json.loads(decide(5.0, 2, 0.1, 20).to_json())
    assert set(rec) == {"statistic", "dof", "critical_value", "p_value", "alpha", "reject", "n_test", "diagnostics"}
    assert rec["p_value"] == pytest.approx(1 - chi2_cdf(5.0, 4))
    assert TestOutcome(**rec).reject == rec["reject"]


def test_run_test_deterministic_and_consistent():
    cfg = GaussLinConfig.build(1, 1, 2, c=0.0)
    tr, te = gen_gauss_linear(cfg, 400, seed=0), gen_gauss_linear(cfg, 200, seed=1)
    tc = TrainConfig(n_steps=10, batch_size=64, hidden=(8,))
    a, b = run_test(tr, te, tc), run_test(tr, te, tc)
    assert a.to_json() == b.to_json()
    T, n = statistic(train(tr, tc), te)
    assert a.statistic == T and a.n_test == n == 200
    assert a.diagnostics["n_train"] == 400


def _oracle_null_draws(reps, n, seed):
    """T over repetitions with exact conditionally-orthonormal features.

    X is independent of Z; v(y, z) is an orthonormal centered basis of p(y|z)
    for every z, so u and v are uncorrelated given Z with identity second
    moments and the statistic is asymptotically chi-squared with d^2 dof.
    """
    rng = np.random.default_rng(seed)
    kx, ky, kz, d = 4, 4, 5, 2
    px = rng.dirichlet(np.full(kx, 3.0))
    pz = rng.dirichlet(np.full(kz, 3.0))
    py_z = rng.dirichlet(np.full(ky, 3.0), size=kz).T
    joint = DiscreteJoint(np.einsum("x,z,yz->xyz", px, pz, py_z))
    u_tab = centered_basis(px).functions[:, :d]
    v_tab = np.zeros((ky, kz, d))
    for z in range(kz):
        v_tab[:, z] = centered_basis(py_z[:, z]).functions[:, :d]
    w_tab = centered_basis(pz).functions
    out = []
    for r in range(reps):
        ds = gen_discrete(joint, n, seed=10_000 + r)
        x, y, z = (a[:, 0].astype(int) for a in (ds.x, ds.y, ds.z))
        out.append(statistic_from_features(u_tab[x], v_tab[y, z], w_tab[z]))
    return np.array(out)


def _ks_chi2(draws, dof):
    s = np.sort(draws)
    f = np.array([chi2_cdf(t, dof) for t in s])
    k = np.arange(1, len(s) + 1) / len(s)
    return max(np.max(k - f), np.max(f - (k - 1 / len(s))))


def test_oracle_features_null_is_chi_squared():
    draws = _oracle_null_draws(300, 2000, seed=0)
    assert _ks_chi2(draws, 4) <= 0.12
    assert 0.01 <= np.mean(draws >= chi2_quantile(4, 0.95)) <= 0.10
