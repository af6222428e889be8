"""Local K-step training loops run by each participating client."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .datagen import Dataset, sample_minibatch
from .methods import MethodConfig
from .numerics import (
    RngStream,
    axpy,
    check_finite,
    elementwise_max,
    hadamard,
    inv_sqrt,
)

__all__ = [
    "Broadcast",
    "ClientState",
    "LocalHyper",
    "LocalResult",
    "local_adaptive_amended",
    "local_prox_sgd",
    "local_scaffold",
    "local_sgd",
    "run_local",
]


@dataclass
class ClientState:
    """A client's private data and its own random stream.

    ``data`` may be ``None`` for data-free objectives such as
    :class:`~fedsim.objective.Quadratic`; gradients are then exact.
    """

    cid: int
    model: object
    data: Dataset | None
    shard: np.ndarray | None
    rng: RngStream

    def stochastic_grad(self, x: np.ndarray, batch: int) -> np.ndarray:
        if self.data is None:
            return self.model.grad(x, None, None)
        idx = sample_minibatch(self.shard, batch, self.rng)
        return self.model.grad(x, self.data, idx)


@dataclass(frozen=True)
class LocalHyper:
    eta_l: float
    K: int
    alpha: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.99
    eps_v: float = 1e-8
    mu_prox: float = 0.0
    batch: int = 50

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")

    @classmethod
    def from_method(cls, method: MethodConfig, eta_l: float, K: int, batch: int) -> "LocalHyper":
        return cls(eta_l=eta_l, K=K, alpha=method.alpha, beta1=method.beta1,
                   beta2=method.beta2, eps_v=method.eps_v, mu_prox=method.mu_prox, batch=batch)


@dataclass
class LocalResult:
    """What a client sends back after its local loop.

    ``offset`` is ``x_{i,0} - x_{i,K}``. ``aux`` carries method-specific
    payload (``control`` for SCAFFOLD) and diagnostics: ``dir_sum`` is the
    sum of the K update directions, ``md_sum`` the sum of ``m * theta`` for
    adaptive loops.
    """

    offset: np.ndarray
    vhat_final: np.ndarray | None = None
    aux: dict = field(default_factory=dict)
    steps_taken: int = 0


@dataclass(frozen=True)
class Broadcast:
    """Server state shipped to clients at the start of a round."""

    x: np.ndarray
    g_a: np.ndarray | None = None
    v: np.ndarray | None = None
    controls: dict | None = None  # SCAFFOLD: client id -> last control variate


def _sgd_loop(x0, client, hyper, direction, rng, trace):
    """Shared SGD body; ``direction(g, x)`` maps a raw gradient to the step direction."""
    if rng is not None:
        client = ClientState(client.cid, client.model, client.data, client.shard, rng)
    x = x0.copy()
    dir_sum = np.zeros_like(x0)
    grad_sum = np.zeros_like(x0)
    steps = [] if trace else None
    for _ in range(hyper.K):
        g = client.stochastic_grad(x, hyper.batch)
        d = direction(g, x)
        x = axpy(-hyper.eta_l, d, x)
        dir_sum += d
        grad_sum += g
        if trace:
            steps.append({"g": g, "dir": d, "x": x})
    aux = {"dir_sum": dir_sum, "grad_mean": grad_sum / hyper.K}
    if trace:
        aux["trace"] = steps
    return LocalResult(check_finite(x0 - x, "local offset"), None, aux, hyper.K)


def local_sgd(x0, client: ClientState, hyper: LocalHyper, correction=None,
              rng: RngStream | None = None, trace: bool = False) -> LocalResult:
    """K plain SGD steps; with ``correction`` each step uses ``alpha*g + (1-alpha)*correction``."""
    if correction is None:
        return _sgd_loop(x0, client, hyper, lambda g, x: g, rng, trace)
    a = hyper.alpha
    return _sgd_loop(x0, client, hyper, lambda g, x: a * g + (1.0 - a) * correction, rng, trace)


def local_prox_sgd(x0, client: ClientState, hyper: LocalHyper,
                   rng: RngStream | None = None, trace: bool = False) -> LocalResult:
    """SGD on ``F_i(x) + mu_prox/2 |x - x0|^2``."""
    mu = hyper.mu_prox
    if mu < 0:
        raise ValueError("mu_prox must be nonnegative")
    return _sgd_loop(x0, client, hyper, lambda g, x: g + mu * (x - x0), rng, trace)


def local_scaffold(x0, client: ClientState, hyper: LocalHyper, g_a, c_i, scale: float = 1.0,
                   rng: RngStream | None = None, trace: bool = False) -> LocalResult:
    """SGD with the control-variate correction ``g + scale * (g_a - c_i)``.

    The returned ``aux['control']`` is the client's new control variate: the
    mean of the raw stochastic gradients it just computed.
    """
    shift = g_a - c_i
    res = _sgd_loop(x0, client, hyper, lambda g, x: g + scale * shift, rng, trace)
    res.aux["control"] = res.aux["grad_mean"]
    return res


def local_adaptive_amended(x0, client: ClientState, hyper: LocalHyper, g_a, v_init,
                           rng: RngStream | None = None, trace: bool = False) -> LocalResult:
    """Amended AMSGrad-style local loop; ``alpha = 1`` is plain local Adam.

    Per step: ``m = b1*m + (1-b1)*g``, ``v = b2*v + (1-b2)*g*g``,
    ``vhat = max(v, vhat)``, ``theta = 1/sqrt(vhat)`` and
    ``x -= eta_l * (alpha * m*theta + (1-alpha) * g_a)``. Momentum restarts at
    zero; ``v`` and ``vhat`` start from the broadcast ``v_init``. No bias
    correction is applied.
    """
    eps_sq = hyper.eps_v ** 2
    # relative slack so a literal 1e-16 counts as (1e-8)**2 = 1.0000000000000002e-16
    if np.any(v_init < eps_sq * (1.0 - 1e-12)):
        raise ValueError(f"v_init has entries below the floor eps_v^2 = {eps_sq:g}")
    if hyper.beta1 > hyper.K / (hyper.K + 1):
        warnings.warn(
            f"beta1={hyper.beta1} exceeds K/(K+1)={hyper.K / (hyper.K + 1):.4f}; "
            "momentum barely warms up within one round",
            stacklevel=2,
        )
    if rng is not None:
        client = ClientState(client.cid, client.model, client.data, client.shard, rng)
    a, b1, b2 = hyper.alpha, hyper.beta1, hyper.beta2
    x = x0.copy()
    m = np.zeros_like(x0)
    v = v_init.copy()
    vhat = v_init.copy()
    pull = (1.0 - a) * g_a
    md_sum = np.zeros_like(x0)
    dir_sum = np.zeros_like(x0)
    theta_max = 0.0
    vhat_min_increment = np.inf
    steps = [] if trace else None
    for _ in range(hyper.K):
        g = client.stochastic_grad(x, hyper.batch)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * hadamard(g, g)
        new_vhat = elementwise_max(v, vhat)
        vhat_min_increment = min(vhat_min_increment, float(np.min(new_vhat - vhat)))
        vhat = new_vhat
        theta = inv_sqrt(vhat)
        md = hadamard(m, theta)
        d = a * md + pull
        x = axpy(-hyper.eta_l, d, x)
        md_sum += md
        dir_sum += d
        theta_max = max(theta_max, float(theta.max()))
        if trace:
            steps.append({"g": g, "m": m, "v": v, "vhat": vhat, "theta": theta, "dir": d, "x": x})
    aux = {
        "md_sum": md_sum,
        "dir_sum": dir_sum,
        "theta_max": theta_max,
        "vhat_min_increment": vhat_min_increment,
    }
    if trace:
        aux["trace"] = steps
    return LocalResult(check_finite(x0 - x, "local offset"), vhat, aux, hyper.K)


def run_local(method: MethodConfig, x0, client: ClientState, bc: Broadcast, hyper: LocalHyper,
              rng: RngStream | None = None, trace: bool = False) -> LocalResult:
    """Dispatch to the local loop the method prescribes."""
    name = method.name

    def need(field_name):
        val = getattr(bc, field_name)
        if val is None:
            raise ValueError(f"{name} needs '{field_name}' in the broadcast")
        return val

    if name == "fedavg" or name == "fedadam":
        return local_sgd(x0, client, hyper, None, rng, trace)
    if name == "fedprox":
        return local_prox_sgd(x0, client, hyper, rng, trace)
    if name in ("fedcm", "fedadam_cm"):
        return local_sgd(x0, client, hyper, need("g_a"), rng, trace)
    if name in ("scaffold", "scaled_scaffold"):
        g_a = need("g_a")
        c_i = need("controls").get(client.cid)
        if c_i is None:
            c_i = np.zeros_like(x0)
        return local_scaffold(x0, client, hyper, g_a, c_i, method.scale, rng, trace)
    if name in ("localadam", "fedlada"):
        g_a = bc.g_a if name == "fedlada" else np.zeros_like(x0)
        if g_a is None:
            need("g_a")
        return local_adaptive_amended(x0, client, hyper, g_a, need("v"), rng, trace)
    raise ValueError(f"unknown method {name!r}")
