"""Differentiable local objectives with hand-written gradients.

Three model kinds share one interface (``dim``, ``loss``, ``grad``, ``init``):

* :class:`Quadratic` -- ``0.5 x'Ax - b'x``; data-free, exactly L-smooth.
* :class:`SoftmaxLinear` -- multinomial logistic regression with bias.
* :class:`MLP1` -- one hidden layer with ReLU, GeLU or SMU activation.

Losses are the mean over the given sample indices plus ``weight_decay/2 * |x|^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, log_softmax, softmax

from .datagen import Dataset
from .numerics import DimensionError, RngStream, check_finite

__all__ = [
    "Activation",
    "MLP1",
    "Quadratic",
    "SoftmaxLinear",
    "accuracy",
    "central_difference_grad",
    "full_grad_norm",
    "full_loss",
    "gradient_check",
    "heterogeneity_estimate",
    "make_model",
]

_GELU_K = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715


@dataclass(frozen=True)
class Activation:
    """Pointwise nonlinearity ``relu``, ``gelu`` (tanh form) or ``smu``.

    SMU is ``0.5 * (u + u * erf(mu * u))``; larger ``mu`` tracks ReLU more
    closely.
    """

    kind: str = "relu"
    mu: float = 25.0

    def __post_init__(self):
        if self.kind not in ("relu", "gelu", "smu"):
            raise ValueError(f"unknown activation {self.kind!r}")
        if self.kind == "smu" and not self.mu > 0:
            raise ValueError("SMU needs mu > 0")

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "relu":
            return np.maximum(u, 0.0)
        if self.kind == "gelu":
            return 0.5 * u * (1.0 + np.tanh(_GELU_K * (u + _GELU_C * u**3)))
        return 0.5 * (u + u * erf(self.mu * u))

    def derivative(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "relu":
            return (u > 0.0).astype(np.float64)
        if self.kind == "gelu":
            t = np.tanh(_GELU_K * (u + _GELU_C * u**3))
            return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * _GELU_K * (1.0 + 3 * _GELU_C * u * u)
        mu = self.mu
        return 0.5 * (1.0 + erf(mu * u) + u * (2.0 * mu / math.sqrt(math.pi)) * np.exp(-(mu * u) ** 2))


def _check_call(model, x: np.ndarray, idx) -> np.ndarray:
    if x.ndim != 1 or x.shape[0] != model.dim:
        raise DimensionError(f"{type(model).__name__} expects d={model.dim}, got shape {x.shape}")
    if idx is None:
        return None
    idx = np.asarray(idx)
    if idx.size == 0:
        raise ValueError("index list is empty")
    return idx


def _check_labels(model, data: Dataset) -> None:
    if data.n_classes > model.C:
        raise ValueError(f"label out of range: data has {data.n_classes} classes, model has {model.C}")
    if data.p != model.p:
        raise DimensionError(f"model expects {model.p} features, data has {data.p}")


class Quadratic:
    """``F(x) = 0.5 x'Ax - b'x + weight_decay/2 |x|^2``; ignores data and indices."""

    def __init__(self, A, b, weight_decay: float = 0.0):
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        b = np.atleast_1d(np.asarray(b, dtype=np.float64))
        if A.shape != (b.size, b.size):
            raise DimensionError(f"A is {A.shape}, b has {b.size} entries")
        if not np.allclose(A, A.T):
            raise ValueError("A must be symmetric")
        if np.linalg.eigvalsh(A).min() < -1e-12:
            raise ValueError("A must be positive semidefinite")
        self.A, self.b, self.weight_decay = A, b, float(weight_decay)

    @property
    def dim(self) -> int:
        return self.b.size

    @property
    def smoothness(self) -> float:
        return float(np.linalg.eigvalsh(self.A).max()) + self.weight_decay

    def minimum(self) -> float:
        H = self.A + self.weight_decay * np.eye(self.dim)
        xs = np.linalg.lstsq(H, self.b, rcond=None)[0]
        return float(-0.5 * self.b @ xs)

    def minimizer(self) -> np.ndarray:
        H = self.A + self.weight_decay * np.eye(self.dim)
        return np.linalg.lstsq(H, self.b, rcond=None)[0]

    def init(self, rng: RngStream) -> np.ndarray:
        return rng.normal(size=self.dim)

    def loss(self, x, data=None, idx=None) -> float:
        _check_call(self, x, idx)
        return float(0.5 * x @ self.A @ x - self.b @ x + 0.5 * self.weight_decay * (x @ x))

    def grad(self, x, data=None, idx=None) -> np.ndarray:
        _check_call(self, x, idx)
        return check_finite(self.A @ x - self.b + self.weight_decay * x, "gradient")


class SoftmaxLinear:
    """Logits ``W f + c`` with ``W`` (C x p) row-major followed by ``c`` in the flat vector."""

    def __init__(self, p: int, C: int, weight_decay: float = 0.0):
        if p < 1 or C < 2:
            raise ValueError("need p >= 1 and C >= 2")
        self.p, self.C, self.weight_decay = int(p), int(C), float(weight_decay)

    @property
    def dim(self) -> int:
        return self.C * (self.p + 1)

    def unflatten(self, x):
        W = x[: self.C * self.p].reshape(self.C, self.p)
        return W, x[self.C * self.p:]

    def init(self, rng: RngStream) -> np.ndarray:
        return np.zeros(self.dim)

    def logits(self, x, features):
        W, c = self.unflatten(x)
        return features @ W.T + c

    def loss(self, x, data: Dataset, idx) -> float:
        idx = _check_call(self, x, idx)
        _check_labels(self, data)
        y = data.labels[idx]
        lp = log_softmax(self.logits(x, data.features[idx]), axis=1)
        nll = -lp[np.arange(y.size), y].mean()
        return float(nll + 0.5 * self.weight_decay * (x @ x))

    def grad(self, x, data: Dataset, idx) -> np.ndarray:
        idx = _check_call(self, x, idx)
        _check_labels(self, data)
        f, y = data.features[idx], data.labels[idx]
        G = softmax(self.logits(x, f), axis=1)
        G[np.arange(y.size), y] -= 1.0
        G /= y.size
        g = np.concatenate([(G.T @ f).ravel(), G.sum(axis=0)])
        return check_finite(g + self.weight_decay * x, "gradient")


class MLP1:
    """One-hidden-layer perceptron; flat layout ``W1 (h x p), b1, W2 (C x h), b2``."""

    def __init__(self, p: int, h: int, C: int, activation: Activation | None = None,
                 weight_decay: float = 0.0):
        if p < 1 or h < 1 or C < 2:
            raise ValueError("need p >= 1, h >= 1 and C >= 2")
        self.p, self.h, self.C = int(p), int(h), int(C)
        self.activation = activation or Activation("relu")
        self.weight_decay = float(weight_decay)

    @property
    def dim(self) -> int:
        return self.h * (self.p + 1) + self.C * (self.h + 1)

    def unflatten(self, x):
        p, h, C = self.p, self.h, self.C
        o = 0
        W1 = x[o:o + h * p].reshape(h, p); o += h * p
        b1 = x[o:o + h]; o += h
        W2 = x[o:o + C * h].reshape(C, h); o += C * h
        return W1, b1, W2, x[o:o + C]

    def init(self, rng: RngStream) -> np.ndarray:
        # N(0, 1/fan_in) weights, zero biases
        W1 = rng.normal(0.0, 1.0 / math.sqrt(self.p), size=(self.h, self.p))
        W2 = rng.normal(0.0, 1.0 / math.sqrt(self.h), size=(self.C, self.h))
        return np.concatenate([W1.ravel(), np.zeros(self.h), W2.ravel(), np.zeros(self.C)])

    def _forward(self, x, features):
        W1, b1, W2, b2 = self.unflatten(x)
        pre = features @ W1.T + b1
        hid = self.activation(pre)
        return pre, hid, hid @ W2.T + b2

    def logits(self, x, features):
        return self._forward(x, features)[2]

    def loss(self, x, data: Dataset, idx) -> float:
        idx = _check_call(self, x, idx)
        _check_labels(self, data)
        y = data.labels[idx]
        lp = log_softmax(self.logits(x, data.features[idx]), axis=1)
        return float(-lp[np.arange(y.size), y].mean() + 0.5 * self.weight_decay * (x @ x))

    def grad(self, x, data: Dataset, idx) -> np.ndarray:
        idx = _check_call(self, x, idx)
        _check_labels(self, data)
        f, y = data.features[idx], data.labels[idx]
        _, _, W2, _ = self.unflatten(x)
        pre, hid, out = self._forward(x, f)
        d_out = softmax(out, axis=1)
        d_out[np.arange(y.size), y] -= 1.0
        d_out /= y.size
        d_pre = (d_out @ W2) * self.activation.derivative(pre)
        g = np.concatenate([
            (d_pre.T @ f).ravel(), d_pre.sum(axis=0),
            (d_out.T @ hid).ravel(), d_out.sum(axis=0),
        ])
        return check_finite(g + self.weight_decay * x, "gradient")


def make_model(kind: str, p: int, C: int, hidden: int = 16, activation: str = "relu",
               mu: float = 25.0, weight_decay: float = 0.0):
    if kind == "softmax":
        return SoftmaxLinear(p, C, weight_decay)
    if kind == "mlp":
        return MLP1(p, hidden, C, Activation(activation, mu), weight_decay)
    raise ValueError(f"unknown model kind {kind!r} (expected 'softmax' or 'mlp')")


def _all(data):
    return None if data is None else np.arange(data.n)


def full_loss(model, x, data: Dataset | None) -> float:
    return model.loss(x, data, _all(data))


def full_grad_norm(model, x, data: Dataset | None) -> float:
    """Squared norm of the full-batch gradient."""
    g = model.grad(x, data, _all(data))
    return float(g @ g)


def accuracy(model, x, data: Dataset) -> float:
    pred = np.argmax(model.logits(x, data.features), axis=1)
    return float(np.mean(pred == data.labels))


def heterogeneity_estimate(model, x, data: Dataset, shards) -> float:
    """Largest ``|grad F_i(x) - grad F(x)|^2`` over shards; a diagnostic for sigma_g."""
    g = model.grad(x, data, _all(data))
    return max(float(np.sum((model.grad(x, data, s) - g) ** 2)) for s in shards)


def central_difference_grad(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Gradient of scalar ``f`` at ``x`` by central differences, one coordinate at a time."""
    g = np.empty_like(x)
    e = x.copy()
    for j in range(x.size):
        e[j] = x[j] + step
        fp = f(e)
        e[j] = x[j] - step
        fm = f(e)
        e[j] = x[j]
        g[j] = (fp - fm) / (2.0 * step)
    return g


def gradient_check(model, x, data, idx, step: float = 1e-5) -> float:
    """Relative error ``|g - g_fd| / max(|g|, |g_fd|)`` between analytic and numeric gradients."""
    g = model.grad(x, data, idx)
    g_fd = central_difference_grad(lambda z: model.loss(z, data, idx), x, step)
    scale = max(np.linalg.norm(g), np.linalg.norm(g_fd), 1e-12)
    return float(np.linalg.norm(g - g_fd) / scale)
