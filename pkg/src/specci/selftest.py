"""Quick invariant checks runnable without pytest."""

from __future__ import annotations

import numpy as np

from . import emploss
from .datagen import Dataset, make_ci_joint, make_dep_joint
from .featnet import FeatureNet
from .numkit import chi2_quantile, eig_sym, svd
from .oracle import pcov_matrix
from .trainer import TrainConfig, train


def check_quantiles():
    assert abs(chi2_quantile(1, 0.95) - 3.841459) < 1e-6
    assert abs(chi2_quantile(4, 0.95) - 9.487729) < 1e-6


def check_linalg():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(8, 8))
    a = a + a.T
    e = eig_sym(a)
    assert np.max(np.abs((e.eigenvectors * e.eigenvalues) @ e.eigenvectors.T - a)) < 1e-10
    b = rng.normal(size=(7, 4))
    s = svd(b)
    assert np.max(np.abs((s.left * s.singular_values) @ s.right.T - b)) < 1e-10


def check_hand_losses():
    bf = emploss.BatchFeatures(U=np.array([[1.0], [-1.0]]), V=np.array([[1.0], [-1.0]]),
                               W=np.zeros((2, 2)), M=np.eye(1), N_raw=np.eye(2))
    assert abs(emploss.loss_out(bf)[0] + 3.0) < 1e-12


def check_gradients():
    rng = np.random.default_rng(1)
    u = FeatureNet.init([3, 6, 2], "tanh", rng)
    x = rng.normal(size=(8, 3))
    V, W = rng.normal(size=(8, 2)), rng.normal(size=(8, 4))
    M, N = rng.normal(size=(2, 2)), np.eye(4)

    def value():
        bf = emploss.BatchFeatures(U=u(x), V=V, W=W, M=M, N_raw=N)
        return emploss.loss_out(bf)[0] + emploss.omega(bf.U)[0]

    bf = emploss.BatchFeatures(U=u.forward(x), V=V, W=W, M=M, N_raw=N)
    grads = u.backward(emploss.loss_out(bf)[1]["U"] + emploss.omega(bf.U)[1])
    h = 1e-6
    for p, g in zip(u.params(), grads):
        idx = (0,) * p.ndim
        old = p[idx]
        p[idx] = old + h
        plus = value()
        p[idx] = old - h
        minus = value()
        p[idx] = old
        num = (plus - minus) / (2 * h)
        assert abs(num - g[idx]) <= 1e-4 * max(1.0, abs(num))


def check_oracle():
    for seed in range(5):
        assert np.linalg.norm(pcov_matrix(make_ci_joint((3, 3, 2), seed)).matrix) <= 1e-12
    assert np.linalg.norm(pcov_matrix(make_dep_joint((2, 2, 2), 0, 0.2)).matrix) > 0.01


def check_whitening():
    rng = np.random.default_rng(2)
    ds = Dataset(rng.normal(size=(64, 1)), rng.normal(size=(64, 1)), rng.normal(size=(64, 2)))
    bundle = train(ds, TrainConfig(n_steps=0, batch_size=32, hidden=(4,)))
    for feats in bundle.features(ds).values():
        cov = feats.T @ feats / feats.shape[0]
        assert np.linalg.norm(cov - np.eye(cov.shape[0])) <= 1e-8


CHECKS = {
    "quantiles": check_quantiles,
    "linalg": check_linalg,
    "hand-losses": check_hand_losses,
    "gradients": check_gradients,
    "oracle": check_oracle,
    "whitening": check_whitening,
}


def run_all() -> dict[str, str | None]:
    """Name -> None on success or the failure message."""
    results = {}
    for name, check in CHECKS.items():
        try:
            check()
            results[name] = None
        except AssertionError as exc:
            results[name] = str(exc) or "assertion failed"
    return results
