"""Exact covariance operators on finite spaces.

Each marginal gets an orthonormal basis of its centered L2 space. In these
coordinates the auto-covariance of every variable is the identity, so
Sigma_XY - Sigma_XZ Sigma_ZY is the genuine partial covariance and plain matrix
norms equal operator norms.

Ÿ = (Y, Z) is coded lexicographically as y * |Z| + z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import DiscreteJoint
from .numkit import eig_sym, svd


@dataclass(frozen=True)
class CenteredBasis:
    """Columns are basis functions evaluated on the atoms (zero on null atoms)."""

    functions: np.ndarray
    marginal: np.ndarray

    @property
    def dim(self) -> int:
        return self.functions.shape[1]

    def coords(self, values: np.ndarray) -> np.ndarray:
        """E[phi_i(A) f_k(A)] for function values ``values[atom, k]``."""
        return self.functions.T @ (self.marginal[:, None] * values)


@dataclass(frozen=True)
class OperatorMatrix:
    matrix: np.ndarray
    source: CenteredBasis
    target: CenteredBasis


def centered_basis(marginal) -> CenteredBasis:
    p = np.asarray(marginal, dtype=np.float64)
    keep = np.nonzero(p > 0)[0]
    if keep.size < 2:
        raise ValueError("a centered basis needs at least two atoms with positive mass")
    root = np.sqrt(p[keep] / p[keep].sum())
    projector = np.eye(keep.size) - np.outer(root, root)
    eig = eig_sym(projector)
    xi = eig.eigenvectors[:, : keep.size - 1]
    functions = np.zeros((p.size, keep.size - 1))
    functions[keep] = xi / root[:, None]
    return CenteredBasis(functions=functions, marginal=p)


def cov_matrix(p_ab: np.ndarray, basis_a: CenteredBasis, basis_b: CenteredBasis) -> OperatorMatrix:
    """[Sigma_AB]_ij = E[phi_i(A) psi_j(B)] by exhaustive summation."""
    p_ab = np.asarray(p_ab, dtype=np.float64)
    if p_ab.shape != (basis_a.functions.shape[0], basis_b.functions.shape[0]):
        raise ValueError("joint table does not match the bases")
    if not (np.allclose(p_ab.sum(axis=1), basis_a.marginal, atol=1e-12)
            and np.allclose(p_ab.sum(axis=0), basis_b.marginal, atol=1e-12)):
        raise ValueError("bases were not built from this joint's marginals")
    return OperatorMatrix(basis_a.functions.T @ p_ab @ basis_b.functions, basis_b, basis_a)


@dataclass(frozen=True)
class PcovParts:
    pcov: np.ndarray
    basis_x: CenteredBasis
    basis_yz: CenteredBasis
    basis_z: CenteredBasis


def marginals(joint: DiscreteJoint) -> dict[str, np.ndarray]:
    p = joint.p
    kx, ky, kz = p.shape
    p_x_yz = p.reshape(kx, ky * kz)
    p_z_yz = np.zeros((kz, ky * kz))
    for y in range(ky):
        for z in range(kz):
            p_z_yz[z, y * kz + z] = p[:, y, z].sum()
    return {
        "x": p.sum(axis=(1, 2)),
        "z": p.sum(axis=(0, 1)),
        "yz": p_x_yz.sum(axis=0),
        "x_yz": p_x_yz,
        "x_z": p.sum(axis=1),
        "z_yz": p_z_yz,
    }


def pcov_parts(joint: DiscreteJoint) -> PcovParts:
    mg = marginals(joint)
    bx, byz, bz = centered_basis(mg["x"]), centered_basis(mg["yz"]), centered_basis(mg["z"])
    s_xyz = cov_matrix(mg["x_yz"], bx, byz).matrix
    s_xz = cov_matrix(mg["x_z"], bx, bz).matrix
    s_zyz = cov_matrix(mg["z_yz"], bz, byz).matrix
    return PcovParts(s_xyz - s_xz @ s_zyz, bx, byz, bz)


def pcov_matrix(joint: DiscreteJoint) -> OperatorMatrix:
    parts = pcov_parts(joint)
    return OperatorMatrix(parts.pcov, parts.basis_yz, parts.basis_x)


@dataclass(frozen=True)
class TruncatedSvd:
    singular_values: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.T


def truncated_svd_pcov(joint: DiscreteJoint, d: int) -> TruncatedSvd:
    mat = pcov_matrix(joint).matrix
    if d < 1 or d > min(mat.shape):
        raise ValueError(f"rank {d} outside [1, {min(mat.shape)}]")
    s = svd(mat)
    return TruncatedSvd(s.singular_values[:d], s.left[:, :d], s.right[:, :d])


def _opnorm(a: np.ndarray) -> float:
    return float(svd(a).singular_values[0]) if a.size else 0.0


def _onehot(k: int) -> np.ndarray:
    return np.eye(k)


def atom_features(bundle, joint: DiscreteJoint) -> dict[str, np.ndarray]:
    """Whitened bundle features evaluated on every atom of X, (Y,Z) and Z."""
    kx, ky, kz = joint.sizes
    ey = np.repeat(_onehot(ky), kz, axis=0)
    ez = np.tile(_onehot(kz), (ky, 1))
    try:
        return {
            "u": bundle.apply("u", _onehot(kx)),
            "v": bundle.apply("v", bundle.encode_yz(ey, ez)),
            "w": bundle.apply("w", _onehot(kz)),
        }
    except ValueError as exc:
        raise ValueError(f"bundle does not accept one-hot encodings of sizes {joint.sizes}: {exc}") from exc


def _pop_cov(values: np.ndarray, p: np.ndarray) -> np.ndarray:
    mean = p @ values
    c = values - mean
    return c.T @ (p[:, None] * c)


def gap_components(bundle, joint: DiscreteJoint) -> dict[str, float]:
    """The four operator-norm terms of the representation gap, exactly."""
    parts = pcov_parts(joint)
    mg = marginals(joint)
    feats = atom_features(bundle, joint)
    d = bundle.d
    cu = parts.basis_x.coords(feats["u"])
    cv = parts.basis_yz.coords(feats["v"])
    learned = cu @ bundle.M_white @ cv.T
    target = truncated_svd_pcov(joint, min(d, min(parts.pcov.shape))).matrix
    return {
        "svd": _opnorm(target - learned),
        "cov_u": _opnorm(_pop_cov(feats["u"], mg["x"]) - np.eye(d)),
        "cov_v": _opnorm(_pop_cov(feats["v"], mg["yz"]) - np.eye(d)),
        "cov_w": _opnorm(_pop_cov(feats["w"], mg["z"]) - np.eye(2 * d)),
    }


def gap_diagnostic(bundle, joint: DiscreteJoint) -> float:
    return max(gap_components(bundle, joint).values())


def learned_operator(bundle, joint: DiscreteJoint) -> np.ndarray:
    """U M V* of the bundle in the oracle's centered coordinates."""
    parts = pcov_parts(joint)
    feats = atom_features(bundle, joint)
    return parts.basis_x.coords(feats["u"]) @ bundle.M_white @ parts.basis_yz.coords(feats["v"]).T


def perfect_bundle(joint: DiscreteJoint, d: int):
    """A bundle whose features are the exact leading singular functions.

    u and v are the top-d singular functions, w the first 2d centered basis
    functions of Z and M = diag(sigma). Nets are linear maps of one-hot codes
    (v reads the pair code), whitening is the identity.
    """
    from .featnet import FeatureNet
    from .trainer import RepresentationBundle, TrainConfig

    kx, ky, kz = joint.sizes
    parts = pcov_parts(joint)
    if parts.basis_z.dim < 2 * d:
        raise ValueError(f"|Z| = {kz} leaves {parts.basis_z.dim} centered directions, fewer than 2d = {2 * d}")
    ts = truncated_svd_pcov(joint, d)

    def linear(table):
        return FeatureNet([table.shape[0], table.shape[1]], "identity",
                          [np.array(table, dtype=np.float64)], [np.zeros(table.shape[1])])

    cfg = TrainConfig(d=d, hidden=(), activation="identity", yz_encoding="kron")
    bundle = RepresentationBundle(
        config=cfg,
        u=linear(parts.basis_x.functions @ ts.left),
        v=linear(parts.basis_yz.functions @ ts.right),
        w=linear(parts.basis_z.functions[:, : 2 * d]),
        M=np.diag(ts.singular_values),
        N_raw=np.eye(2 * d),
    )
    for which, width in (("u", d), ("v", d), ("w", 2 * d)):
        bundle.means[which] = np.zeros(width)
        bundle.whiteners[which] = np.eye(width)
        bundle.whiteners[f"{which}_inv"] = np.eye(width)
    return bundle
