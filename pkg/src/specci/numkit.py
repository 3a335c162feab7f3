"""Small dense linear algebra and chi-squared special functions.

Everything here works on modest matrices (a few hundred rows at most), so the
decompositions are plain cyclic Jacobi sweeps rather than LAPACK calls. Results
carry a deterministic sign convention: the first non-negligible entry of every
eigen/left-singular vector is non-negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NumkitError(ValueError):
    pass


class SingularMatrixError(NumkitError):
    def __init__(self, eigenvalue: float):
        super().__init__(f"matrix is not positive definite: smallest eigenvalue {eigenvalue:.3e}")
        self.eigenvalue = eigenvalue


@dataclass(frozen=True)
class SymEig:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class Svd:
    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray


def _as_finite_matrix(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2:
        raise NumkitError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumkitError("matrix has non-finite entries")
    return a


def _fix_signs(vectors: np.ndarray, partner: np.ndarray | None = None) -> None:
    # in place; flips `partner` columns alongside so products are unchanged
    if vectors.size == 0:
        return
    scale = np.max(np.abs(vectors), axis=0)
    for k in range(vectors.shape[1]):
        col = vectors[:, k]
        big = np.nonzero(np.abs(col) > 1e-12 * max(scale[k], 1e-300))[0]
        if big.size and col[big[0]] < 0:
            vectors[:, k] = -col
            if partner is not None:
                partner[:, k] = -partner[:, k]


def eig_sym(a, tol: float = 1e-15, max_sweeps: int = 100) -> SymEig:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    The input is symmetrized as (A + A^T)/2. Eigenvalues come back sorted in
    descending order.
    """
    a = _as_finite_matrix(a)
    n, k = a.shape
    if n != k:
        raise NumkitError(f"eig_sym needs a square matrix, got {a.shape}")
    work = 0.5 * (a + a.T)
    q = np.eye(n)
    floor = tol * math.sqrt(np.sum(work * work)) / max(n, 1)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = work[p, r]
                if abs(apr) <= floor:
                    continue
                rotated = True
                app, arr = work[p, p], work[r, r]
                theta = (arr - app) / (2.0 * apr)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp = work[p, :].copy()
                work[p, :] = c * rp - s * work[r, :]
                work[r, :] = s * rp + c * work[r, :]
                cp = work[:, p].copy()
                work[:, p] = c * cp - s * work[:, r]
                work[:, r] = s * cp + c * work[:, r]
                qp = q[:, p].copy()
                q[:, p] = c * qp - s * q[:, r]
                q[:, r] = s * qp + c * q[:, r]
        if not rotated:
            break
    vals = np.diag(work).copy()
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    q = q[:, order]
    _fix_signs(q)
    return SymEig(eigenvalues=vals, eigenvectors=q)


def _complete_basis(u: np.ndarray, known: int) -> None:
    # overwrite columns known: with an orthonormal completion of columns :known
    m, n = u.shape
    for k in range(known, n):
        for e in range(m):
            cand = np.zeros(m)
            cand[e] = 1.0
            for _ in range(2):
                cand -= u[:, :k] @ (u[:, :k].T @ cand)
            norm = np.linalg.norm(cand)
            if norm > 1e-6:
                u[:, k] = cand / norm
                break


def svd(a, tol: float = 1e-15, max_sweeps: int = 100) -> Svd:
    """Thin SVD by one-sided (Hestenes) Jacobi orthogonalization.

    Returns left (m x r), singular values (r,), right (n x r) with r = min(m, n)
    so that ``a = left @ diag(s) @ right.T``.
    """
    a = _as_finite_matrix(a)
    m, n = a.shape
    if m < n:
        t = svd(a.T, tol=tol, max_sweeps=max_sweeps)
        # re-fix signs on the new left factor
        left, right = t.right.copy(), t.left.copy()
        _fix_signs(left, right)
        return Svd(left=left, singular_values=t.singular_values, right=right)

    work = a.copy()
    v = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for r in range(p + 1, n):
                alpha = work[:, p] @ work[:, p]
                beta = work[:, r] @ work[:, r]
                gamma = work[:, p] @ work[:, r]
                if abs(gamma) <= tol * math.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                wp = work[:, p].copy()
                work[:, p] = c * wp - s * work[:, r]
                work[:, r] = s * wp + c * work[:, r]
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, r]
                v[:, r] = s * vp + c * v[:, r]
        if not rotated:
            break

    sigma = np.linalg.norm(work, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    work = work[:, order]
    v = v[:, order]
    cutoff = max(sigma[0] if n else 0.0, 1e-300) * 1e-13
    left = np.zeros((m, n))
    rank = int(np.sum(sigma > cutoff))
    left[:, :rank] = work[:, :rank] / sigma[:rank]
    sigma[rank:] = np.where(sigma[rank:] > 0, sigma[rank:], 0.0)
    _complete_basis(left, rank)
    _fix_signs(left, v)
    return Svd(left=left, singular_values=sigma, right=v)


def inv_sqrt_spd(a, jitter: float = 0.0) -> np.ndarray:
    """Symmetric B with B (A + jitter I) B = I."""
    a = _as_finite_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise NumkitError(f"inv_sqrt_spd needs a square matrix, got {a.shape}")
    if jitter < 0:
        raise NumkitError("jitter must be non-negative")
    eig = eig_sym(a + jitter * np.eye(a.shape[0]))
    lo = eig.eigenvalues[-1] if eig.eigenvalues.size else 1.0
    if lo <= 1e-12:
        raise SingularMatrixError(float(lo))
    q = eig.eigenvectors
    b = (q / np.sqrt(eig.eigenvalues)) @ q.T
    return 0.5 * (b + b.T)


# --- regularized incomplete gamma -------------------------------------------

_EPS = 1e-16
_TINY = 1e-300


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) by its power series; good for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    # Q(a, x) by modified Lentz continued fraction; good for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise NumkitError("shape must be positive")
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if a <= 0:
        raise NumkitError("shape must be positive")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def chi2_cdf(x: float, dof: int) -> float:
    return gammainc_lower(dof / 2.0, x / 2.0)


def chi2_sf(x: float, dof: int) -> float:
    return gammainc_upper(dof / 2.0, x / 2.0)


def chi2_quantile(dof: int, p: float) -> float:
    """Lower-tail quantile of chi-squared(dof) by bisection to width 1e-12."""
    if int(dof) != dof or dof < 1:
        raise NumkitError(f"dof must be a positive integer, got {dof}")
    if not 0.0 < p < 1.0:
        raise NumkitError(f"p must lie in (0, 1), got {p}")
    lo, hi = 0.0, dof + 40.0 * math.sqrt(dof)
    while chi2_cdf(hi, dof) < p:
        lo, hi = hi, 2.0 * hi
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if chi2_cdf(mid, dof) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sqrt_spd(a, jitter: float = 0.0) -> np.ndarray:
    """Symmetric square root of A + jitter I; the inverse of ``inv_sqrt_spd``."""
    a = _as_finite_matrix(a)
    eig = eig_sym(a + jitter * np.eye(a.shape[0]))
    q = eig.eigenvectors
    b = (q * np.sqrt(np.clip(eig.eigenvalues, 0.0, None))) @ q.T
    return 0.5 * (b + b.T)
