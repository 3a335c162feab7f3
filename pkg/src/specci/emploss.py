"""Centered batch statistics and the contrastive bi-level losses.

All covariances use the 1/m normalization. Loss gradients are returned with
respect to the *raw* (uncentered) feature matrices; centering is applied
internally and its Jacobian folded into the result.

Two readings of the mixed terms are supported:

``"printed"``
    outer: <u_i, v_j><w_i, M w_j>; inner: <u_i, N v_j><w_i, M w_j>. M acts on
    the first d coordinates of w, and u, v are zero-padded to 2d before N.
``"trace"``
    outer: <u_i, M v_j><w_i, w_j>; inner: <u_i, M v_j><w_i, N w_j>. These are
    the U-statistic estimators of 2 tr(C_UW C_WV M^T) and
    tr(C_UW (N + N^T) C_WV M^T).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CONVENTIONS = ("printed", "trace")


@dataclass
class BatchFeatures:
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    M: np.ndarray
    N_raw: np.ndarray

    def __post_init__(self):
        m = self.U.shape[0]
        if self.V.shape[0] != m or self.W.shape[0] != m:
            raise ValueError("feature matrices disagree on batch size")

    @property
    def N(self) -> np.ndarray:
        return 0.5 * (self.N_raw + self.N_raw.T)


def center(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    return f - f.mean(axis=0, keepdims=True)


def cross_cov(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(1/m) center(a)^T center(b)."""
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"batch mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 2:
        raise ValueError("need at least two samples")
    return center(a).T @ center(b) / a.shape[0]


def _pad_cols(x: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros((x.shape[0], width))
    out[:, : x.shape[1]] = x
    return out


def _pad_square(a: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros((size, size))
    out[: a.shape[0], : a.shape[1]] = a
    return out


def _check(m: int, convention: str):
    if m < 2:
        raise ValueError("losses need a batch of at least two samples")
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")


def loss_out(bf: BatchFeatures, convention: str = "trace"):
    """Outer loss and gradients w.r.t. U, V, W, M."""
    m, d = bf.U.shape
    _check(m, convention)
    Ub, Vb, Wb, M = center(bf.U), center(bf.V), center(bf.W), bf.M
    off = 1.0 - np.eye(m)
    c1 = 1.0 / (m * (m - 1))
    c2 = 2.0 / (m - 1)
    c3 = 2.0 / (m * (m - 1))

    A = Ub @ M @ Vb.T
    Ao = A * off
    value = c1 * np.sum(Ao * Ao) - c2 * np.trace(A)
    dA = 2.0 * c1 * Ao - c2 * np.eye(m)
    dW = np.zeros_like(Wb)
    dM = np.zeros_like(M)

    if convention == "trace":
        G = Wb @ Wb.T
        value += c3 * np.sum(Ao * G)
        dA += c3 * G * off
        S = c3 * Ao
        dW = (S + S.T) @ Wb
        dU = dA @ Vb @ M.T
        dV = dA.T @ Ub @ M
        dM = Ub.T @ dA @ Vb
    else:
        P = _pad_square(M, Wb.shape[1])
        B = Ub @ Vb.T
        H = Wb @ P @ Wb.T
        value += c3 * np.sum(B * H * off)
        dB = c3 * H * off
        dH = c3 * B * off
        dU = dA @ Vb @ M.T + dB @ Vb
        dV = dA.T @ Ub @ M + dB.T @ Ub
        dW = dH @ Wb @ P.T + dH.T @ Wb @ P
        dM = Ub.T @ dA @ Vb + (Wb.T @ dH @ Wb)[:d, :d]

    return float(value), {"U": center(dU), "V": center(dV), "W": center(dW), "M": dM}


def loss_in(bf: BatchFeatures, convention: str = "trace"):
    """Inner loss and gradients w.r.t. W and N_raw (U, V, M held fixed)."""
    m, d = bf.U.shape
    _check(m, convention)
    Ub, Vb, Wb, M, N = center(bf.U), center(bf.V), center(bf.W), bf.M, bf.N
    off = 1.0 - np.eye(m)
    c1 = 1.0 / (m * (m - 1))
    c3 = 2.0 / (m * (m - 1))

    Q = Wb @ N @ Wb.T
    Qo = Q * off
    value = c1 * np.sum(Qo * Qo)
    dQ = 2.0 * c1 * Qo

    if convention == "trace":
        A = Ub @ M @ Vb.T
        value -= c3 * np.sum(A * Qo)
        dQ -= c3 * A * off
        dW = (dQ + dQ.T) @ Wb @ N
        dN = Wb.T @ dQ @ Wb
    else:
        q = Wb.shape[1]
        Up, Vp = _pad_cols(Ub, q), _pad_cols(Vb, q)
        P = _pad_square(M, q)
        B = Up @ N @ Vp.T
        H = Wb @ P @ Wb.T
        value -= c3 * np.sum(B * H * off)
        dH = -c3 * B * off
        dB = -c3 * H * off
        dW = (dQ + dQ.T) @ Wb @ N + dH @ Wb @ P.T + dH.T @ Wb @ P
        dN = Wb.T @ dQ @ Wb + Up.T @ dB @ Vp

    dN_raw = 0.5 * (dN + dN.T)
    return float(value), {"W": center(dW), "N_raw": dN_raw}


def omega(features: np.ndarray, target_dim: int | None = None):
    """||cross_cov(f, f) - I||_F^2 and its gradient w.r.t. the raw features."""
    m, q = features.shape
    if target_dim is not None and target_dim != q:
        raise ValueError(f"feature width {q} does not match target dimension {target_dim}")
    if m < 2:
        raise ValueError("need at least two samples")
    fb = center(features)
    D = fb.T @ fb / m - np.eye(q)
    value = float(np.sum(D * D))
    grad = (4.0 / m) * fb @ D
    return value, center(grad)


def omega_out(U: np.ndarray, V: np.ndarray):
    vu, gu = omega(U)
    vv, gv = omega(V)
    return vu + vv, gu, gv


def omega_in(W: np.ndarray):
    return omega(W)
