"""Bi-level training of the spectral features, then whitening."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import emploss
from .datagen import Dataset
from .featnet import Adam, FeatureNet
from .numkit import SingularMatrixError, inv_sqrt_spd, sqrt_spd

log = logging.getLogger(__name__)

BUNDLE_TAG = "specci-bundle"
BUNDLE_VERSION = 1
# no jitter unless the plain inverse square root fails
JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class WhiteningError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    d: int = 2
    n_steps: int = 2000
    n_steps_inner: int = 5
    batch_size: int = 256
    gamma: float = 1.0
    lr_outer: float = 1e-3
    lr_inner: float = 1e-3
    seed: int = 0
    hidden: tuple = (64, 64)
    activation: str = "tanh"
    u_hidden: tuple | None = None
    v_hidden: tuple | None = None
    w_hidden: tuple | None = None
    convention: str = "trace"
    # "concat" feeds [y, z] to v; "kron" feeds the row-wise outer product y (x) z,
    # which for one-hot y and z is the one-hot code of the pair
    yz_encoding: str = "concat"
    # learning rates decay linearly to this fraction of their start value
    lr_final_ratio: float = 1.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        for name in ("u_hidden", "v_hidden", "w_hidden"):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, tuple(int(h) for h in val))
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.n_steps < 0 or self.n_steps_inner < 0:
            raise ValueError("step counts must be non-negative")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.convention not in emploss.CONVENTIONS:
            raise ValueError(f"unknown loss convention {self.convention!r}")
        if not 0.0 < self.lr_final_ratio <= 1.0:
            raise ValueError("lr_final_ratio must lie in (0, 1]")
        if self.yz_encoding not in ("concat", "kron"):
            raise ValueError(f"unknown yz_encoding {self.yz_encoding!r}")

    def arch(self, which: str) -> tuple:
        own = getattr(self, f"{which}_hidden")
        return self.hidden if own is None else own

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


def encode_yz(y: np.ndarray, z: np.ndarray, mode: str) -> np.ndarray:
    if mode == "kron":
        return (y[:, :, None] * z[:, None, :]).reshape(y.shape[0], -1)
    return np.hstack([y, z])


@dataclass
class RepresentationBundle:
    config: TrainConfig
    u: FeatureNet
    v: FeatureNet
    w: FeatureNet
    M: np.ndarray
    N_raw: np.ndarray
    means: dict = field(default_factory=dict)
    whiteners: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.config.d

    @property
    def nets(self) -> dict[str, FeatureNet]:
        return {"u": self.u, "v": self.v, "w": self.w}

    @property
    def M_white(self) -> np.ndarray:
        """M expressed in whitened coordinates, so that u M v^T is unchanged."""
        return self.whiteners["u_inv"] @ self.M @ self.whiteners["v_inv"]

    def encode_yz(self, y, z) -> np.ndarray:
        return encode_yz(np.asarray(y, dtype=np.float64), np.asarray(z, dtype=np.float64), self.config.yz_encoding)

    def inputs(self, ds: Dataset) -> dict[str, np.ndarray]:
        return {"u": ds.x, "v": self.encode_yz(ds.y, ds.z), "w": ds.z}

    def raw(self, which: str, batch) -> np.ndarray:
        return self.nets[which](np.asarray(batch, dtype=np.float64))

    def apply(self, which: str, batch) -> np.ndarray:
        """Whitened, training-centered features of one net."""
        if which not in ("u", "v", "w"):
            raise ValueError(f"which must be u, v or w, not {which!r}")
        out = self.raw(which, batch)
        if which not in self.whiteners:
            return out - out.mean(axis=0)
        return (out - self.means[which]) @ self.whiteners[which]

    def features(self, ds: Dataset) -> dict[str, np.ndarray]:
        return {k: self.apply(k, v) for k, v in self.inputs(ds).items()}

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> str:
        def arr(a):
            return np.asarray(a).tolist()
        doc = {
            "format": BUNDLE_TAG,
            "version": BUNDLE_VERSION,
            "config": self.config.to_dict(),
            "nets": {k: n.to_text() for k, n in self.nets.items()},
            "M": arr(self.M),
            "N_raw": arr(self.N_raw),
            "means": {k: arr(v) for k, v in self.means.items()},
            "whiteners": {k: arr(v) for k, v in self.whiteners.items()},
            "diagnostics": _jsonable(self.diagnostics),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "RepresentationBundle":
        doc = json.loads(text)
        if doc.get("format") != BUNDLE_TAG or doc.get("version") != BUNDLE_VERSION:
            raise ValueError("not a version-1 specci bundle")
        cfg = TrainConfig.from_dict(doc["config"])
        nets = {k: FeatureNet.from_text(t) for k, t in doc["nets"].items()}
        return cls(
            config=cfg, u=nets["u"], v=nets["v"], w=nets["w"],
            M=np.array(doc["M"]), N_raw=np.array(doc["N_raw"]),
            means={k: np.array(v) for k, v in doc["means"].items()},
            whiteners={k: np.array(v) for k, v in doc["whiteners"].items()},
            diagnostics=doc["diagnostics"],
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "RepresentationBundle":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def init_bundle(dims: tuple[int, int, int], config: TrainConfig) -> RepresentationBundle:
    d_x, d_y, d_z = dims
    d = config.d
    v_in = d_y * d_z if config.yz_encoding == "kron" else d_y + d_z
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
    u = FeatureNet.init([d_x, *config.arch("u"), d], config.activation, rng)
    v = FeatureNet.init([v_in, *config.arch("v"), d], config.activation, rng)
    w = FeatureNet.init([d_z, *config.arch("w"), 2 * d], config.activation, rng)
    return RepresentationBundle(config, u, v, w, M=np.eye(d), N_raw=np.eye(2 * d))


class _Batches:
    """Epoch-wise shuffled mini-batches without replacement."""

    def __init__(self, n: int, size: int, rng):
        self.n, self.size, self.rng = n, size, rng
        self.order = rng.permutation(n)
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.pos + self.size > self.n:
            self.order = self.rng.permutation(self.n)
            self.pos = 0
        idx = self.order[self.pos:self.pos + self.size]
        self.pos += self.size
        return idx


def train(train_set: Dataset, config: TrainConfig, callback=None) -> RepresentationBundle:
    """Alternate inner steps on (w, N) and outer steps on (u, v, M), then whiten.

    ``callback(phase, step, bundle)`` is invoked after every parameter update
    with phase "inner" or "outer".
    """
    m = len(train_set)
    if m < max(config.batch_size, 4 * config.d):
        raise ValueError(f"training set of {m} rows is smaller than max(batch_size, 4d)")
    bundle = init_bundle(train_set.dims, config)
    inputs = bundle.inputs(train_set)
    batches = _Batches(m, config.batch_size, np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[1]))
    u, v, w = bundle.u, bundle.v, bundle.w
    inner_params = w.params() + [bundle.N_raw]
    inner_names = [f"w.{n}" for n in w.param_names()] + ["N_raw"]
    outer_params = u.params() + v.params() + [bundle.M]
    outer_names = [f"u.{n}" for n in u.param_names()] + [f"v.{n}" for n in v.param_names()] + ["M"]
    opt_in = Adam.for_params(inner_params, lr=config.lr_inner)
    opt_out = Adam.for_params(outer_params, lr=config.lr_outer)
    gamma, conv = config.gamma, config.convention
    trace = {"loss_in": [], "omega_in": [], "loss_out": [], "omega_out": []}

    for step in range(config.n_steps):
        frac = 1.0 - (1.0 - config.lr_final_ratio) * step / max(config.n_steps - 1, 1)
        opt_in.lr, opt_out.lr = config.lr_inner * frac, config.lr_outer * frac
        for _ in range(config.n_steps_inner):
            idx = batches.next()
            bf = emploss.BatchFeatures(
                U=u(inputs["u"][idx]), V=v(inputs["v"][idx]),
                W=w.forward(inputs["w"][idx]), M=bundle.M, N_raw=bundle.N_raw)
            val, grads = emploss.loss_in(bf, conv)
            om, g_om = emploss.omega_in(bf.W)
            gw = w.backward(grads["W"] + gamma * g_om)
            opt_in.step(inner_params, gw + [grads["N_raw"]], inner_names)
            trace["loss_in"].append(val)
            trace["omega_in"].append(om)
            if callback is not None:
                callback("inner", step, bundle)

        idx = batches.next()
        bf = emploss.BatchFeatures(
            U=u.forward(inputs["u"][idx]), V=v.forward(inputs["v"][idx]),
            W=w(inputs["w"][idx]), M=bundle.M, N_raw=bundle.N_raw)
        val, grads = emploss.loss_out(bf, conv)
        om, g_u, g_v = emploss.omega_out(bf.U, bf.V)
        gu = u.backward(grads["U"] + gamma * g_u)
        gv = v.backward(grads["V"] + gamma * g_v)
        opt_out.step(outer_params, gu + gv + [grads["M"]], outer_names)
        trace["loss_out"].append(val)
        trace["omega_out"].append(om)
        if callback is not None:
            callback("outer", step, bundle)

    bundle.diagnostics["trace"] = trace
    bundle.diagnostics["final_omega_in"] = trace["omega_in"][-1] if trace["omega_in"] else None
    bundle.diagnostics["final_omega_out"] = trace["omega_out"][-1] if trace["omega_out"] else None
    return whiten(bundle, train_set)


def whitener(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """C^{-1/2} with the smallest jitter from 0, 1e-10..1e-6 that makes it exist."""
    scale = float(np.max(np.abs(cov))) if cov.size else 0.0
    if scale <= 1e-12:
        raise WhiteningError("feature block has collapsed to a constant")
    for jitter in JITTERS:
        try:
            return inv_sqrt_spd(cov, jitter), jitter
        except SingularMatrixError:
            continue
    raise WhiteningError("feature covariance is singular even with jitter 1e-6")


def whiten(bundle: RepresentationBundle, train_set: Dataset) -> RepresentationBundle:
    """Store training means and C^{-1/2} whiteners for u, v and w."""
    inputs = bundle.inputs(train_set)
    info = {}
    for which, x in inputs.items():
        f = bundle.raw(which, x)
        mean = f.mean(axis=0)
        fc = f - mean
        cov = fc.T @ fc / f.shape[0]
        a, jitter = whitener(cov)
        resid = float(np.linalg.norm(a @ cov @ a - np.eye(cov.shape[0])))
        bundle.means[which] = mean
        bundle.whiteners[which] = a
        bundle.whiteners[f"{which}_inv"] = sqrt_spd(cov, jitter)
        info[which] = {"jitter": jitter, "residual": resid}
        if resid > 1e-8:
            log.warning("whitening of %s leaves residual %.2e (jitter %.0e)", which, resid, jitter)
    bundle.diagnostics["whitening"] = info
    return bundle
