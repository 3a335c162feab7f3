"""Seeded synthetic data: post-nonlinear benchmark, Gaussian-linear family,
and exact finite joints over (X, Y, Z)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

NONLINEARITIES = {"identity": lambda t: t, "tanh": np.tanh, "cos": np.cos}


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64).T).T
        self.y = np.atleast_2d(np.asarray(self.y, dtype=np.float64).T).T
        self.z = np.atleast_2d(np.asarray(self.z, dtype=np.float64).T).T
        n = self.x.shape[0]
        if self.y.shape[0] != n or self.z.shape[0] != n:
            raise ValueError("x, y, z must have the same number of rows")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.x.shape[1], self.y.shape[1], self.z.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.z[idx])

    def split(self, ratio: float, rng=None) -> tuple["Dataset", "Dataset"]:
        """Train/test split; the first ``ratio`` share goes to training.

        With an ``rng`` the rows are shuffled first.
        """
        if not 0.0 < ratio < 1.0:
            raise ValueError("split ratio must lie in (0, 1)")
        n = len(self)
        order = rng.permutation(n) if rng is not None else np.arange(n)
        cut = int(round(ratio * n))
        return self.subset(order[:cut]), self.subset(order[cut:])

    def header(self) -> list[str]:
        dx, dy, dz = self.dims
        return ([f"x_{i}" for i in range(dx)] + [f"y_{i}" for i in range(dy)]
                + [f"z_{i}" for i in range(dz)])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            for row in np.hstack([self.x, self.y, self.z]):
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=np.float64).reshape(len(rows) - 1, len(rows[0]))
        cols = {"x": [], "y": [], "z": []}
        for k, name in enumerate(header):
            prefix = name.split("_")[0]
            if prefix not in cols:
                raise ValueError(f"unexpected column {name!r}")
            cols[prefix].append(k)
        if not all(cols.values()):
            raise ValueError("dataset needs at least one x_, y_ and z_ column")
        return cls(body[:, cols["x"]], body[:, cols["y"]], body[:, cols["z"]])


# --- post-nonlinear model ----------------------------------------------------

@dataclass
class PnlConfig:
    d_x: int = 1
    d_y: int = 1
    d_z: int = 100
    n: int = 1500
    hypothesis: str = "null"
    f: str = "tanh"
    g: str = "tanh"
    seed: int = 0
    # scale of the Y noise uses A_X as printed; "a_y" switches to A_Y
    y_noise_matrix: str = "a_x"
    aux_draws: int = 100_000

    def __post_init__(self):
        if min(self.d_x, self.d_y, self.d_z) < 1 or self.n < 1:
            raise ValueError("dimensions and sample count must be positive")
        if self.hypothesis not in ("null", "alternative"):
            raise ValueError(f"hypothesis must be 'null' or 'alternative', got {self.hypothesis!r}")
        for tag in (self.f, self.g):
            if tag not in NONLINEARITIES:
                raise ValueError(f"unknown nonlinearity {tag!r}")
        if self.y_noise_matrix not in ("a_x", "a_y"):
            raise ValueError("y_noise_matrix must be 'a_x' or 'a_y'")


def l1_column_normalized(rng, rows: int, cols: int) -> np.ndarray:
    a = rng.uniform(0.0, 1.0, size=(rows, cols))
    return a / np.abs(a).sum(axis=0, keepdims=True)


def pnl_matrices(config: PnlConfig, rng) -> dict[str, np.ndarray]:
    return {
        "a_x": l1_column_normalized(rng, config.d_x, config.d_z),
        "a_y": l1_column_normalized(rng, config.d_y, config.d_z),
        "a_xy": l1_column_normalized(rng, config.d_y, config.d_x),
    }


def pnl_noise_scales(config: PnlConfig, mats, rng) -> tuple[float, float]:
    """Monte-Carlo estimates of E||A_X Z / d_X||_1 and the Y analogue."""
    z = rng.laplace(0.0, 1.0, size=(config.aux_draws, config.d_z))
    ax_z = z @ mats["a_x"].T
    scale_x = float(np.mean(np.abs(ax_z / config.d_x).sum(axis=1)))
    src = ax_z if config.y_noise_matrix == "a_x" else z @ mats["a_y"].T
    scale_y = float(np.mean(np.abs(src / config.d_y).sum(axis=1)))
    return scale_x, scale_y


def pnl_sample(config: PnlConfig, mats, scales, rng) -> Dataset:
    f, g = NONLINEARITIES[config.f], NONLINEARITIES[config.g]
    z = rng.laplace(0.0, 1.0, size=(config.n, config.d_z))
    if config.hypothesis == "null":
        eps_x = rng.standard_normal((config.n, config.d_x))
        eps_y = rng.standard_normal((config.n, config.d_y))
        x = f(z @ mats["a_x"].T + scales[0] * eps_x)
        y = g(z @ mats["a_y"].T + scales[1] * eps_y)
    else:
        x = rng.standard_normal((config.n, config.d_x))
        y = g(z @ mats["a_y"].T + 2.0 * x @ mats["a_xy"].T)
    return Dataset(x, y, z)


def pnl_model(config: PnlConfig) -> tuple[dict[str, np.ndarray], tuple[float, float]]:
    """Mixing matrices and noise scales that ``gen_pnl`` uses for this seed."""
    mat_ss, aux_ss, _ = np.random.SeedSequence(config.seed).spawn(3)
    mats = pnl_matrices(config, np.random.default_rng(mat_ss))
    scales = (0.0, 0.0)
    if config.hypothesis == "null":
        scales = pnl_noise_scales(config, mats, np.random.default_rng(aux_ss))
    return mats, scales


def gen_pnl(config: PnlConfig, model=None) -> Dataset:
    mats, scales = pnl_model(config) if model is None else model
    data_ss = np.random.SeedSequence(config.seed).spawn(3)[2]
    return pnl_sample(config, mats, scales, np.random.default_rng(data_ss))


def pnl_null_moments(config: PnlConfig, z: np.ndarray, nodes: int = 2001, model=None) -> dict[str, np.ndarray]:
    """E[X|Z], Var[X|Z] and the Y analogues under the null.

    Integrates over the Gaussian noise on a uniform grid over [-9, 9]; the
    noise scale is large enough that the nonlinearity looks like a step, which
    Gauss-Hermite rules handle poorly.
    """
    if config.hypothesis != "null":
        raise ValueError("conditional moments are only defined for the null model")
    mats, (sx, sy) = pnl_model(config) if model is None else model
    t = np.linspace(-9.0, 9.0, nodes)
    wts = np.exp(-0.5 * t * t)
    wts /= wts.sum()
    out = {}
    for key, fn, mat, scale in (("x", config.f, "a_x", sx), ("y", config.g, "a_y", sy)):
        vals = NONLINEARITIES[fn]((np.asarray(z) @ mats[mat].T)[..., None] + scale * t)
        mean = vals @ wts
        out[f"mean_{key}"] = mean
        out[f"var_{key}"] = np.maximum((vals * vals) @ wts - mean * mean, 0.0)
    return out


# --- Gaussian-linear family ---------------------------------------------------

@dataclass
class GaussLinConfig:
    """Z ~ N(0, I); X = a Z + noise_x e1; Y = b Z + c X + noise_y e2."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    noise_x: float = 1.0
    noise_y: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=np.float64))
        self.b = np.atleast_2d(np.asarray(self.b, dtype=np.float64))
        self.c = np.atleast_2d(np.asarray(self.c, dtype=np.float64))
        d_x, d_z = self.a.shape
        if self.b.shape[1] != d_z or self.c.shape != (self.b.shape[0], d_x):
            raise ValueError("coefficient shapes are inconsistent")
        if self.noise_x <= 0 or self.noise_y <= 0:
            raise ValueError("noise scales must be positive")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.a.shape[0], self.b.shape[0], self.a.shape[1]

    @classmethod
    def build(cls, d_x=1, d_y=1, d_z=1, a=1.0, b=1.0, c=0.0, noise_x=1.0, noise_y=1.0, seed=0):
        """Scalar coefficients broadcast to full matrices, scaled by 1/sqrt(d_z)
        (1/sqrt(d_x) for c) so the signal variance does not grow with dimension."""
        return cls(
            a=np.full((d_x, d_z), a / np.sqrt(d_z)),
            b=np.full((d_y, d_z), b / np.sqrt(d_z)),
            c=np.full((d_y, d_x), c / np.sqrt(d_x)),
            noise_x=noise_x, noise_y=noise_y, seed=seed,
        )


def gen_gauss_linear(config: GaussLinConfig, n: int, seed=None) -> Dataset:
    rng = np.random.default_rng(config.seed if seed is None else seed)
    d_x, d_y, d_z = config.dims
    z = rng.standard_normal((n, d_z))
    x = z @ config.a.T + config.noise_x * rng.standard_normal((n, d_x))
    y = z @ config.b.T + x @ config.c.T + config.noise_y * rng.standard_normal((n, d_y))
    return Dataset(x, y, z)


# --- finite joints ------------------------------------------------------------

@dataclass
class DiscreteJoint:
    p: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.p.ndim != 3:
            raise ValueError("joint must be a 3-d probability tensor p[x, y, z]")
        if np.any(self.p < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(self.p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {self.p.sum()!r}, not 1")

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.p.shape


def gen_discrete(joint: DiscreteJoint, n: int, seed) -> Dataset:
    """n i.i.d. index triples (x, y, z) as single integer-valued columns."""
    rng = np.random.default_rng(seed)
    flat = joint.p.ravel()
    cells = rng.choice(flat.size, size=n, p=flat / flat.sum())
    x, y, z = np.unravel_index(cells, joint.p.shape)
    return Dataset(x[:, None], y[:, None], z[:, None])


def onehot_dataset(ds: Dataset, sizes) -> Dataset:
    def enc(col, k):
        out = np.zeros((col.shape[0], k))
        out[np.arange(col.shape[0]), col[:, 0].astype(int)] = 1.0
        return out
    return Dataset(enc(ds.x, sizes[0]), enc(ds.y, sizes[1]), enc(ds.z, sizes[2]))


def _check_sizes(sizes):
    if len(sizes) != 3 or min(sizes) < 2:
        raise ValueError(f"support sizes must be three integers >= 2, got {sizes}")
    return tuple(int(s) for s in sizes)


def _conditionals(rng, sizes):
    kx, ky, kz = sizes
    pz = rng.dirichlet(np.full(kz, 2.0))
    px_z = rng.dirichlet(np.ones(kx), size=kz).T  # [x, z]
    py_z = rng.dirichlet(np.ones(ky), size=kz).T  # [y, z]
    return pz, px_z, py_z


def make_ci_joint(sizes, seed) -> DiscreteJoint:
    """p(z) p(x|z) p(y|z) with seeded Dirichlet conditionals."""
    sizes = _check_sizes(sizes)
    pz, px_z, py_z = _conditionals(np.random.default_rng(seed), sizes)
    p = np.einsum("z,xz,yz->xyz", pz, px_z, py_z)
    return DiscreteJoint(p / p.sum(), meta={"kind": "ci", "seed": seed})


def make_dep_joint(sizes, seed, strength: float) -> DiscreteJoint:
    """CI joint tilted as p(x|z)p(y|z)(1 + strength * a_z(x) b_z(y)).

    a_z, b_z are centered under p(.|z) and scaled to max |.| = 1, so the X-Z and
    (Y,Z) marginals are untouched and every cell stays non-negative for
    strength <= 1.
    """
    sizes = _check_sizes(sizes)
    rng = np.random.default_rng(seed)
    pz, px_z, py_z = _conditionals(rng, sizes)
    kx, ky, kz = sizes
    tilt = np.zeros(sizes)
    for z in range(kz):
        a = rng.standard_normal(kx)
        a -= a @ px_z[:, z]
        a /= np.max(np.abs(a))
        b = rng.standard_normal(ky)
        b -= b @ py_z[:, z]
        b /= np.max(np.abs(b))
        tilt[:, :, z] = np.outer(a, b)
    p = np.einsum("z,xz,yz->xyz", pz, px_z, py_z) * (1.0 + strength * tilt)
    if np.any(p < 0):
        raise ValueError(f"strength {strength} makes some probabilities negative")
    return DiscreteJoint(p / p.sum(), meta={"kind": "dep", "seed": seed, "strength": strength})
