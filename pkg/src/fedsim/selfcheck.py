"""Exact identity checks and the finite-difference gradient oracle.

Each check returns a :class:`Check` record instead of raising, so the CLI
and the test suite can report every outcome in one pass.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .benchmark import bench_config
from .client import ClientState
from .datagen import Dataset
from .methods import MethodConfig
from .numerics import RngStream
from .objective import MLP1, Activation, SoftmaxLinear, gradient_check
from .orchestrator import ExperimentConfig, build_federation, run_seed

__all__ = [
    "Check",
    "check_alpha_one",
    "check_ga_recursion",
    "check_reductions",
    "check_vhat_bounds",
    "check_z_drift",
    "gradcheck_suite",
    "identity_suite",
    "trajectory",
]


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: {self.value:.3g} (tol {self.tolerance:g}, {self.seconds:.1f}s)"


def trajectory(config: ExperimentConfig, seed: int = 0) -> np.ndarray:
    """Global iterates ``x^1..x^T`` of one seeded run, stacked row-wise."""
    xs = []
    run_seed(config, seed, observer=lambda before, ids, res, after: xs.append(after.x.copy()),
             threads=1)
    return np.array(xs)


def _bitwise(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and a.tobytes() == b.tobytes()


def check_alpha_one(T: int = 60, seed: int = 0) -> Check:
    t0 = time.perf_counter()
    lada = trajectory(bench_config("fedlada", T=T, alpha=1.0), seed)
    adam = trajectory(bench_config("localadam", T=T), seed)
    same = _bitwise(lada, adam)
    diff = 0.0 if same else float(np.max(np.abs(lada - adam)))
    return Check("fedlada(alpha=1) == localadam, bitwise", same, diff, 0.0, time.perf_counter() - t0)


def _amended_run(T: int, alpha: float, seed: int):
    """Observe a no-decay FedLADA run; yields per-round (before, results, after)."""
    cfg = bench_config("fedlada", T=T, alpha=alpha, decay=1.0)
    log = []
    run_seed(cfg, seed, observer=lambda b, ids, res, a: log.append((b, res, a)), threads=1)
    return cfg, log


def _mean_md(results, K: int) -> np.ndarray:
    acc = np.zeros_like(results[0][1].offset)
    for _, r in results:
        acc += r.aux["md_sum"]
    return acc / (len(results) * K)


def check_z_drift(T: int = 50, alpha: float = 0.1, seed: int = 0, tol: float = 1e-9) -> Check:
    """``z^{t+1} - z^t = -K eta_g eta_l * mean(m * theta)`` with ``z^t = (x^t - (1-a) x^{t-1}) / a``."""
    t0 = time.perf_counter()
    cfg, log = _amended_run(T, alpha, seed)
    K, a = cfg.K, alpha
    worst = 0.0
    for before, results, after in log:
        z_old = (before.x - (1 - a) * before.x_prev) / a
        z_new = (after.x - (1 - a) * after.x_prev) / a
        eta = K * before.eta_g
        resid = (z_new - z_old) + eta * before.eta_l * _mean_md(results, K)
        worst = max(worst, float(np.max(np.abs(resid))))
    return Check(f"z-sequence drift, {T} rounds", worst <= tol, worst, tol, time.perf_counter() - t0)


def check_ga_recursion(T: int = 50, alpha: float = 0.1, seed: int = 0, tol: float = 1e-10) -> Check:
    """``g_a^{t+1} = a * mean(m * theta) + (1 - a) * g_a^t`` every round."""
    t0 = time.perf_counter()
    cfg, log = _amended_run(T, alpha, seed)
    worst = 0.0
    for before, results, after in log:
        expect = alpha * _mean_md(results, cfg.K) + (1 - alpha) * before.g_a
        worst = max(worst, float(np.max(np.abs(after.g_a - expect))))
    return Check(f"global offset recursion, {T} rounds", worst <= tol, worst, tol,
                 time.perf_counter() - t0)


def check_vhat_bounds(T: int = 300, seed: int = 0) -> list[Check]:
    """Second-moment maximum never decreases; preconditioner never exceeds ``1/eps_v``."""
    t0 = time.perf_counter()
    cfg = bench_config("fedlada", T=T)
    cap = 1.0 / cfg.method.eps_v
    worst_inc, worst_theta = np.inf, 0.0

    def obs(before, ids, results, after):
        nonlocal worst_inc, worst_theta
        for _, r in results:
            worst_inc = min(worst_inc, r.aux["vhat_min_increment"])
            worst_theta = max(worst_theta, r.aux["theta_max"])

    run_seed(cfg, seed, observer=obs, threads=1)
    dt = time.perf_counter() - t0
    return [
        Check("vhat nondecreasing within local loops (min step)", worst_inc >= 0.0, worst_inc, 0.0, dt),
        Check("theta <= 1/eps_v (max theta * eps_v)", worst_theta <= cap, worst_theta / cap, 1.0, dt),
    ]


def _centralized_sgd(config: ExperimentConfig, seed: int) -> np.ndarray:
    fed = build_federation(config, seed)
    client = fed.clients[0]
    x = fed.model.init(RngStream(seed, "model", 0))
    lr = config.method.eta_l
    xs = []
    for _ in range(config.T):
        x = x - lr * client.stochastic_grad(x, config.batch)
        xs.append(x.copy())
        lr *= config.method.decay
    return np.array(xs)


def check_reductions(T: int = 40, seed: int = 0) -> list[Check]:
    out = []
    t0 = time.perf_counter()
    avg = trajectory(bench_config("fedavg", T=T), seed)
    prox = trajectory(bench_config("fedprox", T=T, mu_prox=0.0), seed)
    out.append(Check("fedprox(mu=0) == fedavg, bitwise", _bitwise(avg, prox),
                     float(np.max(np.abs(avg - prox))), 0.0, time.perf_counter() - t0))
    t0 = time.perf_counter()
    scaf = trajectory(bench_config("scaled_scaffold", T=T, scale=0.0), seed)
    out.append(Check("scaffold(scale=0) == fedavg, bitwise", _bitwise(avg, scaf),
                     float(np.max(np.abs(avg - scaf))), 0.0, time.perf_counter() - t0))
    t0 = time.perf_counter()
    single = replace(bench_config("fedavg", T=T, K=1), m=1, rate=1.0)
    fl = trajectory(single, seed)
    sgd = _centralized_sgd(single, seed)
    out.append(Check("fedavg(m=S=K=1) == centralized sgd, bitwise", _bitwise(fl, sgd),
                     float(np.max(np.abs(fl - sgd))), 0.0, time.perf_counter() - t0))
    return out


def identity_suite(full: bool = True) -> list[Check]:
    """All exact identities; ``full=False`` shortens the monotonicity run."""
    checks = [check_alpha_one(), check_z_drift(), check_ga_recursion()]
    checks += check_vhat_bounds(T=300 if full else 30)
    checks += check_reductions()
    return checks


def _random_problem(rng: np.random.Generator, p: int, C: int, n: int) -> Dataset:
    labels = np.concatenate([np.arange(C), rng.integers(0, C, n - C)])
    return Dataset(rng.normal(size=(n, p)), labels.astype(np.int64), C)


def gradcheck_suite(n_checks: int = 100, tol: float = 1e-5, seed: int = 0) -> list[Check]:
    """``n_checks`` random points, data and minibatches per model kind.

    The MLP uses the smooth activations; ReLU's kink makes central
    differences unreliable whenever a pre-activation lands within one step
    of zero.
    """
    gen = RngStream(seed, "misc", 7).generator
    kinds = {
        "softmax": lambda p, C: SoftmaxLinear(p, C, weight_decay=1e-3),
        "mlp-gelu": lambda p, C: MLP1(p, 6, C, Activation("gelu"), weight_decay=1e-3),
        "mlp-smu": lambda p, C: MLP1(p, 6, C, Activation("smu", mu=4.0), weight_decay=1e-3),
    }
    out = []
    for kind, make in kinds.items():
        t0 = time.perf_counter()
        worst = 0.0
        for _ in range(n_checks):
            p, C = int(gen.integers(2, 7)), int(gen.integers(2, 5))
            data = _random_problem(gen, p, C, 12)
            model = make(p, C)
            x = gen.normal(scale=0.5, size=model.dim)
            idx = gen.choice(data.n, size=int(gen.integers(1, data.n + 1)), replace=False)
            worst = max(worst, gradient_check(model, x, data, idx))
        out.append(Check(f"gradient {kind}: worst relative error of {n_checks}", worst <= tol,
                         worst, tol, time.perf_counter() - t0))
    return out
