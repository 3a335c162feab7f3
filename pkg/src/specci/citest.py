"""The conditional independence test on held-out data."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .datagen import Dataset
from .numkit import chi2_quantile, chi2_sf
from .trainer import RepresentationBundle, TrainConfig, train


@dataclass
class TestOutcome:
    __test__ = False  # keep pytest from collecting this as a test class

    statistic: float
    dof: int
    critical_value: float
    p_value: float
    alpha: float
    reject: bool
    n_test: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def latent_pcov(U: np.ndarray, V: np.ndarray, W: np.ndarray, recenter: bool = True) -> np.ndarray:
    """C_UV - C_UW C_WV with 1/n covariances."""
    n = U.shape[0]
    if recenter:
        U, V, W = (f - f.mean(axis=0) for f in (U, V, W))
    return U.T @ V / n - (U.T @ W / n) @ (W.T @ V / n)


def statistic_from_features(U, V, W, recenter: bool = True) -> float:
    n = U.shape[0]
    if n < 2:
        raise ValueError("the test set needs at least two samples")
    diff = latent_pcov(U, V, W, recenter)
    return float(n * np.sum(diff * diff))


def statistic(bundle: RepresentationBundle, test_set: Dataset, recenter: bool = True) -> tuple[float, int]:
    """n ||C_UV - C_UW C_WV||_F^2 on the test set, features re-centered there."""
    n = len(test_set)
    if n < 2:
        raise ValueError("the test set needs at least two samples")
    f = bundle.features(test_set)
    return statistic_from_features(f["u"], f["v"], f["w"], recenter), n


def decide(T: float, d: int, alpha: float, n: int) -> TestOutcome:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    dof = d * d
    crit = chi2_quantile(dof, 1.0 - alpha)
    return TestOutcome(
        statistic=float(T), dof=dof, critical_value=crit,
        p_value=chi2_sf(T, dof), alpha=alpha, reject=bool(T >= crit), n_test=int(n),
    )


def run_test(train_set: Dataset, test_set: Dataset, config: TrainConfig, alpha: float = 0.05,
             recenter: bool = True) -> TestOutcome:
    bundle = train(train_set, config)
    T, n = statistic(bundle, test_set, recenter)
    out = decide(T, config.d, alpha, n)
    diag = bundle.diagnostics
    out.diagnostics = {
        "n_train": len(train_set),
        "final_omega_in": diag.get("final_omega_in"),
        "final_omega_out": diag.get("final_omega_out"),
        "whitening": diag.get("whitening"),
    }
    return out
