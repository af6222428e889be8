"""Server-side aggregation and global updates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .client import Broadcast, LocalResult
from .methods import GLOBAL_ADAPTIVE, LOCAL_ADAPTIVE, MethodConfig
from .numerics import RngStream, check_finite, elementwise_max, inv_sqrt

__all__ = [
    "ServerState",
    "aggregate_average_descent",
    "aggregate_vhat",
    "global_adam_step",
    "init_server",
    "mean_offset",
    "participants",
    "sample_clients",
    "scaffold_update_controls",
    "server_update",
    "update_ga",
]


@dataclass(frozen=True)
class ServerState:
    x: np.ndarray
    g_a: np.ndarray
    v_avg: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    adam_vhat: np.ndarray
    round: int
    eta_l: float
    eta_g: float
    x_prev: np.ndarray  # x^{t-1}; equals x at round 0
    controls: dict = field(default_factory=dict)

    def broadcast(self) -> Broadcast:
        return Broadcast(x=self.x, g_a=self.g_a, v=self.v_avg, controls=self.controls)


def init_server(x0: np.ndarray, method: MethodConfig) -> ServerState:
    d = x0.size
    v0 = np.full(d, method.server_v0)
    return ServerState(
        x=x0.copy(),
        g_a=np.zeros(d),
        v_avg=np.full(d, method.eps_v ** 2),
        adam_m=np.zeros(d),
        adam_v=v0,
        adam_vhat=v0.copy(),
        round=0,
        eta_l=method.eta_l,
        eta_g=method.eta_g,
        x_prev=x0.copy(),
    )


def sample_clients(m: int, rate: float, rng: RngStream) -> np.ndarray:
    """``ceil(rate * m)`` distinct client ids, uniform without replacement, ascending."""
    if not 0.0 < rate <= 1.0:
        raise ValueError("participation rate must lie in (0, 1]")
    S = participants(m, rate)
    if S == m:
        return np.arange(m)
    return np.sort(rng.choice(m, size=S, replace=False))


def participants(m: int, rate: float) -> int:
    # the epsilon absorbs float noise such as 0.1 * 30 = 3.0000000000000004
    return min(m, max(1, math.ceil(rate * m - 1e-9)))


def _require(results):
    if not results:
        raise ValueError("aggregation needs at least one client result")


def mean_offset(results: list[tuple[int, LocalResult]]) -> np.ndarray:
    """Mean of client offsets, summed in the given (ascending id) order."""
    _require(results)
    acc = np.zeros_like(results[0][1].offset)
    for _, r in results:
        acc += r.offset
    return acc / len(results)


def aggregate_average_descent(state: ServerState, results) -> np.ndarray:
    """``x - eta_g * mean(offsets)``; with ``eta_g = 1`` the mean of the final local models."""
    return check_finite(state.x - state.eta_g * mean_offset(results), "global model")


def update_ga(x_prev, x_new, eta_g: float, eta_l: float, K: int) -> np.ndarray:
    """Global offset per local step: ``(x_prev - x_new) / (eta_g * eta_l * K)``."""
    if eta_g <= 0 or eta_l <= 0 or K <= 0:
        raise ValueError("eta_g, eta_l and K must be positive")
    return (x_prev - x_new) / (eta_g * eta_l * K)


def aggregate_vhat(results) -> np.ndarray:
    _require(results)
    acc = None
    for cid, r in results:
        if r.vhat_final is None:
            raise ValueError(f"client {cid} sent no vhat")
        acc = r.vhat_final.copy() if acc is None else acc + r.vhat_final
    return acc / len(results)


def global_adam_step(state: ServerState, pseudo_grad, variant: str = "adam",
                     beta1: float = 0.9, beta2: float = 0.99) -> ServerState:
    """Server Adam on the pseudo-gradient, first-moment weight on the new term.

    ``m = (1-b1)*m + b1*g``, ``v = (1-b2)*v + b2*g*g``; ``vhat`` is ``v``
    (Adam) or its running elementwise maximum (AMSGrad);
    ``x -= eta_g * m / sqrt(vhat)``.
    """
    if variant not in ("adam", "amsgrad"):
        raise ValueError("variant must be 'adam' or 'amsgrad'")
    g = pseudo_grad
    m = (1.0 - beta1) * state.adam_m + beta1 * g
    v = (1.0 - beta2) * state.adam_v + beta2 * g * g
    vhat = v if variant == "adam" else elementwise_max(v, state.adam_vhat)
    x = check_finite(state.x - state.eta_g * m * inv_sqrt(vhat), "global model")
    return replace(state, x=x, adam_m=m, adam_v=v, adam_vhat=vhat)


def scaffold_update_controls(state: ServerState, results) -> tuple[dict, np.ndarray]:
    """Store each participant's new control variate; broadcast their mean.

    Returns ``(controls, g_a)``. Clients that did not participate keep their
    previous entry; a client never seen uses zeros.
    """
    _require(results)
    controls = dict(state.controls)
    acc = None
    for cid, r in results:
        c = r.aux.get("control")
        if c is None:
            raise ValueError(f"client {cid} sent no control variate")
        controls[cid] = c
        acc = c.copy() if acc is None else acc + c
    return controls, acc / len(results)


def server_update(method: MethodConfig, state: ServerState, results, K: int) -> ServerState:
    """Apply one round of aggregation for ``method`` and advance the round counter.

    Learning rates for the next round are decayed here; ``g_a`` uses the
    rates that produced this round's offsets.
    """
    name = method.name
    updates: dict = {}
    if name in GLOBAL_ADAPTIVE:
        pseudo = mean_offset(results)
        state_after = global_adam_step(state, pseudo, method.server_variant, method.beta1, method.beta2)
        updates.update(adam_m=state_after.adam_m, adam_v=state_after.adam_v,
                       adam_vhat=state_after.adam_vhat)
        x_new = state_after.x
        if name == "fedadam_cm":
            updates["g_a"] = pseudo / (state.eta_l * K)
    else:
        x_new = aggregate_average_descent(state, results)
        if name in ("fedcm", "fedlada"):
            updates["g_a"] = update_ga(state.x, x_new, state.eta_g, state.eta_l, K)
        elif name in ("scaffold", "scaled_scaffold"):
            controls, g_a = scaffold_update_controls(state, results)
            updates.update(controls=controls, g_a=g_a)
        if name in LOCAL_ADAPTIVE:
            updates["v_avg"] = aggregate_vhat(results)

    eta_g = state.eta_g * method.decay if name in GLOBAL_ADAPTIVE else state.eta_g
    return replace(state, x=x_new, x_prev=state.x, round=state.round + 1,
                   eta_l=state.eta_l * method.decay, eta_g=eta_g, **updates)
