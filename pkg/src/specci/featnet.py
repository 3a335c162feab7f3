"""Feed-forward feature maps with hand-written reverse mode and Adam."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("identity", "tanh", "relu")
FORMAT_TAG = "specci-featnet"
FORMAT_VERSION = 1


class ShapeError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(z.dtype)
    return np.ones_like(z)


@dataclass
class FeatureNet:
    """Dense net; hidden layers use ``activation``, the output layer is linear.

    Weights are stored as (fan_in, fan_out) so a batch maps as ``x @ W + b``.
    """

    widths: list[int]
    activation: str
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    _cache: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.widths) < 2 or any(int(w) < 1 for w in self.widths):
            raise ValueError(f"bad layer widths {self.widths}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.widths[k], self.widths[k + 1]) or b.shape != (self.widths[k + 1],):
                raise ShapeError(f"layer {k} parameters do not match widths {self.widths}")

    @classmethod
    def init(cls, widths, activation="tanh", rng=None, seed=None) -> "FeatureNet":
        """Glorot-uniform weights, zero biases."""
        if rng is None:
            rng = np.random.default_rng(seed)
        widths = [int(w) for w in widths]
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(widths, activation, weights, biases)

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def param_names(self) -> list[str]:
        names = []
        for k in range(len(self.weights)):
            names.extend((f"W{k}", f"b{k}"))
        return names

    def copy(self) -> "FeatureNet":
        return FeatureNet(list(self.widths), self.activation,
                          [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward(self, batch: np.ndarray, cache: bool = True) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[1] != self.in_dim:
            raise ShapeError(f"batch shape {batch.shape} does not match input width {self.in_dim}")
        last = len(self.weights) - 1
        inputs, pre = [], []
        a = batch
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(a)
            z = a @ w + b
            if k < last:
                pre.append(z)
                a = _act(self.activation, z)
            else:
                a = z
        if cache:
            self._cache = (batch.shape, inputs, pre)
        return a

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        return self.forward(batch, cache=False)

    def backward(self, out_grad: np.ndarray) -> list[np.ndarray]:
        """Gradients of sum(out_grad * output) w.r.t. ``params()``, in order.

        Uses the activations cached by the preceding ``forward`` call.
        """
        if self._cache is None:
            raise ShapeError("backward called without a cached forward pass")
        shape, inputs, pre = self._cache
        out_grad = np.asarray(out_grad, dtype=np.float64)
        if out_grad.shape != (shape[0], self.out_dim):
            raise ShapeError(f"out_grad shape {out_grad.shape} does not match cached output {(shape[0], self.out_dim)}")
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        g = out_grad
        for k in range(len(self.weights) - 1, -1, -1):
            grads[2 * k] = inputs[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            if k > 0:
                g = g @ self.weights[k].T
                z = pre[k - 1]
                g = g * _act_grad(self.activation, z, inputs[k])
        return grads

    # -- serialization -------------------------------------------------------

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"{FORMAT_TAG} {FORMAT_VERSION}\n")
        buf.write(f"activation {self.activation}\n")
        buf.write("widths " + " ".join(str(w) for w in self.widths) + "\n")
        for name, p in zip(self.param_names(), self.params()):
            buf.write(f"{name} " + " ".join(repr(float(x)) for x in p.ravel()) + "\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "FeatureNet":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        tag, version = lines[0].split()
        if tag != FORMAT_TAG or int(version) != FORMAT_VERSION:
            raise ValueError(f"unsupported feature-net record header {lines[0]!r}")
        activation = lines[1].split()[1]
        widths = [int(w) for w in lines[2].split()[1:]]
        weights, biases = [], []
        for k in range(len(widths) - 1):
            wline = lines[3 + 2 * k].split()
            bline = lines[4 + 2 * k].split()
            if wline[0] != f"W{k}" or bline[0] != f"b{k}":
                raise ValueError(f"malformed parameter record for layer {k}")
            weights.append(np.array([float(x) for x in wline[1:]]).reshape(widths[k], widths[k + 1]))
            biases.append(np.array([float(x) for x in bline[1:]]))
        return cls(widths, activation, weights, biases)


@dataclass
class Adam:
    """Adaptive-moment optimizer over a fixed list of parameter arrays."""

    shapes: list[tuple]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros(s) for s in self.shapes]
            self.v = [np.zeros(s) for s in self.shapes]

    @classmethod
    def for_params(cls, params, **kw) -> "Adam":
        return cls([p.shape for p in params], **kw)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], names=None) -> None:
        """Update ``params`` in place."""
        if len(params) != len(self.shapes) or len(grads) != len(params):
            raise ShapeError("parameter/gradient lists do not match optimizer state")
        for k, g in enumerate(grads):
            if g.shape != self.shapes[k]:
                raise ShapeError(f"gradient {k} has shape {g.shape}, expected {self.shapes[k]}")
            if not np.all(np.isfinite(g)):
                label = names[k] if names else f"#{k}"
                raise NonFiniteGradientError(f"non-finite gradient for parameter {label}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
