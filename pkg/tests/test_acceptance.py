"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; ``conftest.py`` prints them all in
the terminal summary. Running this file directly prints the same lines.
Trend criteria use the canonical benchmark in ``fedsim.benchmark`` with
seeds 0-4 and the medians across seeds.
"""
import math
import os
import subprocess
import sys
import time
import warnings
from functools import lru_cache

import numpy as np
import pytest

from conftest import const_client, quad_client
from fedsim.benchmark import SEEDS, bench_config
from fedsim.client import LocalHyper, local_adaptive_amended, local_sgd
from fedsim.methods import MethodConfig
from fedsim.orchestrator import rounds_to_target, run_seed
from fedsim.selfcheck import (
    check_alpha_one,
    check_ga_recursion,
    check_reductions,
    check_vhat_bounds,
    check_z_drift,
    gradcheck_suite,
)
from fedsim.server import global_adam_step, init_server

REPORT: list[str] = []


def record(label: str, ok: bool, detail: str) -> None:
    REPORT.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    assert ok, f"{label}: {detail}"


@lru_cache(maxsize=None)
def _run(name: str, seed: int, items: tuple = ()):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # beta1 > K/(K+1) notice for short local intervals
        kw = dict(items)
        cfg_kw = {k: kw.pop(k) for k in ("rate", "K") if k in kw}
        return run_seed(bench_config(name, seeds=(seed,), **cfg_kw, **kw), seed, threads=1)


def run(name, seed, **kw):
    return _run(name, seed, tuple(sorted(kw.items())))


def target(seed: int) -> float:
    """1.2x the best training loss FedAvg reaches on the benchmark."""
    return 1.2 * min(r.train_loss for r in run("fedavg", seed))


def rounds(name, seed, **kw):
    return rounds_to_target(run(name, seed, **kw), "train_loss", target(seed))


def median_rounds(name, **kw):
    return float(np.median([rounds(name, s, **kw) for s in SEEDS]))


# 1. identities ------------------------------------------------------------

def test_c1a_alpha_one_matches_localadam():
    c = check_alpha_one(T=60)
    record("C1a fedlada(alpha=1) == localadam bitwise, <10s", c.passed and c.seconds < 10,
           f"max diff {c.value:g}, {c.seconds:.1f}s")


def test_c1b_z_drift():
    c = check_z_drift(T=50, tol=1e-9)
    record("C1b z-sequence drift identity <= 1e-9", c.passed, f"max residual {c.value:.2e}")


def test_c1c_ga_recursion():
    c = check_ga_recursion(T=50, tol=1e-10)
    record("C1c global offset recursion <= 1e-10", c.passed, f"max residual {c.value:.2e}")


def test_c1d_vhat_monotone_theta_bounded():
    inc, theta = check_vhat_bounds(T=300)
    record("C1d vhat monotone and theta <= 1/eps_v over full benchmark run",
           inc.passed and theta.passed,
           f"min vhat step {inc.value:g}, max theta*eps_v {theta.value:g}")


def test_c1e_reductions():
    checks = check_reductions(T=40)
    record("C1e reductions bitwise (prox mu=0, scaffold scale=0, m=S=K=1)",
           all(c.passed for c in checks), "; ".join(f"{c.name.split(',')[0]}: {c.value:g}" for c in checks))


# 2. gradient oracle -------------------------------------------------------

def test_c2_gradient_oracle():
    t0 = time.perf_counter()
    checks = gradcheck_suite(n_checks=100, tol=1e-5)
    dt = time.perf_counter() - t0
    worst = max(c.value for c in checks)
    record("C2 100 finite-difference checks per model kind <= 1e-5, <30s",
           all(c.passed for c in checks) and dt < 30, f"worst rel err {worst:.2e}, {dt:.1f}s")


# 3. hand-computed one-step oracles ---------------------------------------

def test_c3_step_oracles():
    h = LocalHyper(eta_l=0.1, K=1, alpha=0.5, beta1=0.9, beta2=0.99, eps_v=1e-8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lada = local_adaptive_amended(np.zeros(1), const_client(2.0), h, np.ones(1), np.full(1, 1e-16))
    e1 = abs(lada.offset[0] - 0.1)
    sgd = local_sgd(np.ones(1), quad_client(1.0, 0.0), LocalHyper(eta_l=0.1, K=3))
    e2 = abs(sgd.offset[0] - 0.271)
    st = init_server(np.zeros(1), MethodConfig.default("fedadam"))
    step = -global_adam_step(st, np.ones(1), "adam", 0.9, 0.99).x[0]
    e3 = abs(step - 0.1 * 0.9 / math.sqrt(0.9901))
    ok = max(e1, e2, e3) <= 1e-12 and abs(step - 0.09045) < 5e-6
    record("C3 one-step oracles to 1e-12", ok,
           f"fedlada 0.1 err {e1:.1e}; sgd K=3 0.271 err {e2:.1e}; fedadam {step:.6f} err {e3:.1e}")


# 4-8, 10. trends on the benchmark ------------------------------------------

def test_c4_consistency_decreases_with_alpha():
    t0 = time.perf_counter()
    good = 0
    for s in SEEDS:
        c = [np.mean([r.consistency for r in run("fedlada", s, alpha=a)[-50:]]) for a in (0.05, 0.5, 1.0)]
        # the metric is a scatter distance: smaller alpha must give tighter local solutions
        good += c[0] < c[1] < c[2]
    dt = time.perf_counter() - t0
    record("C4 consistency ordered by alpha (0.05 < 0.5 < 1.0) on >=4/5 seeds, <3min",
           good >= 4 and dt < 180, f"{good}/5 seeds, {dt:.0f}s")


def test_c5_local_adaptive_speed():
    fa, la, fl = median_rounds("fedavg"), median_rounds("localadam"), median_rounds("fedlada")
    record("C5 localadam < fedavg and fedlada <= 1.1x localadam (rounds to target)",
           la < fa and fl <= 1.1 * la, f"fedavg {fa:g}, localadam {la:g}, fedlada {fl:g} (limit {1.1 * la:g})")


def test_c6_fedadam_slowdown():
    fa, fd = median_rounds("fedavg"), median_rounds("fedadam")
    record("C6 fedadam rounds >= 1.5x fedavg", fd >= 1.5 * fa,
           f"fedavg {fa:g}, fedadam {fd:g}, ratio {fd / fa:.2f}")


def test_c7_participation_speedup():
    slow, fast = median_rounds("fedlada", rate=0.1), median_rounds("fedlada", rate=0.2)
    ratio = slow / fast
    record("C7 doubling participation speeds fedlada by a factor in [1.15, 2.5]",
           1.15 <= ratio <= 2.5, f"rate 0.1: {slow:g}, rate 0.2: {fast:g}, factor {ratio:.2f}")


def test_c8_local_interval_tradeoff():
    k2, k4 = median_rounds("fedlada", K=2), median_rounds("fedlada", K=4)
    acc4 = float(np.median([run("fedlada", s, K=4)[-1].test_acc for s in SEEDS]))
    acc20 = float(np.median([run("fedlada", s, K=20)[-1].test_acc for s in SEEDS]))
    record("C8 K=4 faster than K=2, and acc(K=20) <= acc(K=4)", k4 < k2 and acc20 <= acc4,
           f"rounds K=2 {k2:g}, K=4 {k4:g}; final acc K=4 {acc4:.3f}, K=20 {acc20:.3f}")


def test_c10_scaled_scaffold_best_at_one():
    acc = {sc: float(np.median([run("scaled_scaffold", s, scale=sc)[-1].test_acc for s in SEEDS]))
           for sc in (0.25, 1.0, 1.5)}
    record("C10 scaled scaffold acc(1.0) >= acc(0.25) and acc(1.5)",
           acc[1.0] >= acc[0.25] and acc[1.0] >= acc[1.5],
           ", ".join(f"scale {k}: {v:.3f}" for k, v in acc.items()))


def test_trailing_gradient_norm_fedlada_vs_localadam():
    window = lambda s: float(np.mean([r.grad_norm_sq for r in s[-50:]]))
    fl = float(np.median([window(run("fedlada", s)) for s in SEEDS]))
    la = float(np.median([window(run("localadam", s)) for s in SEEDS]))
    record("extra fedlada trailing-50 grad norm <= localadam's", fl <= la,
           f"fedlada {fl:.3e}, localadam {la:.3e}")


# 9. determinism through the CLI ------------------------------------------

DET_CONFIG = """\
[method]
name = "fedlada"
eta_l = 0.03

[model]
weight_decay = 1e-3

[data]
sep = 3.0

[run]
T = 25
rate = 0.5
seeds = [0, 1]
"""


def test_c9_cli_determinism(tmp_path):
    cfg = tmp_path / "det.toml"
    cfg.write_text(DET_CONFIG)
    outputs = []
    for i, threads in enumerate(("1", "8", "1", "8")):
        env = dict(os.environ, FEDSIM_THREADS=threads)
        out = tmp_path / f"run{i}"
        proc = subprocess.run([sys.executable, "-m", "fedsim.cli", "run", str(cfg), "--out", str(out)],
                              env=env, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outputs.append((out / "metrics.csv").read_bytes())
    same = all(o == outputs[0] for o in outputs)
    record("C9 metrics.csv byte-identical across invocations and FEDSIM_THREADS 1/8", same,
           f"{len(outputs)} runs, {len(outputs[0])} bytes each")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
