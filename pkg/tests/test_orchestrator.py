import math
from dataclasses import replace

import numpy as np
import pytest

import fedsim.orchestrator as orch
from fedsim.benchmark import bench_config, with_data
from fedsim.client import ClientState
from fedsim.methods import MethodConfig
from fedsim.numerics import RngStream
from fedsim.orchestrator import (
    ConfigError,
    DataConfig,
    ExperimentConfig,
    Federation,
    RoundMetrics,
    build_federation,
    rounds_to_target,
    run_experiment,
    run_round,
    run_seed,
)
from fedsim.server import init_server


def small(name="fedlada", T=8, **kw):
    cfg = bench_config(name, T=T, seeds=(0,), **kw)
    return with_data(cfg, n_train=600, n_test=150)


def test_single_client_single_round_is_local_final_model():
    cfg = replace(small("fedavg", T=1), m=1, rate=1.0)
    fed = build_federation(cfg, 0)
    x0 = fed.model.init(RngStream(0, "model"))
    seen = {}
    run_seed(cfg, 0, fed=fed, observer=lambda b, ids, res, a: seen.update(res=res, after=a))
    (cid, r), = seen["res"]
    assert cid == 0
    assert np.array_equal(seen["after"].x, x0 - r.offset)


def test_identical_clients_have_zero_consistency():
    cfg = small("fedlada")
    base = build_federation(cfg, 0)
    twins = [ClientState(i, base.model, base.train, base.clients[0].shard, RngStream(0, "client", 0))
             for i in range(2)]
    fed = Federation(base.model, twins, base.train, base.test)
    state = init_server(np.zeros(base.model.dim), cfg.method)
    for t in range(3):
        state, m = run_round(fed, cfg.method, state, cfg.K, cfg.batch, 1.0, RngStream(0, "server", t))
        assert m.consistency == 0.0


def test_seeded_run_repeats_bitwise_across_threads():
    cfg = replace(small("fedlada", T=6), rate=0.5)
    a = run_seed(cfg, 3, threads=1)
    b = run_seed(cfg, 3, threads=1)
    c = run_seed(cfg, 3, threads=4)
    strip = lambda s: [replace(r, wall_ms=0.0) for r in s]
    assert strip(a) == strip(b) == strip(c)


def test_metrics_shape_and_bounds():
    stream = run_seed(small("fedlada", T=5), 0)
    assert [r.round for r in stream] == [1, 2, 3, 4, 5]
    for r in stream:
        assert 0.0 <= r.test_acc <= 1.0
        assert all(math.isfinite(v) for v in (r.train_loss, r.grad_norm_sq, r.consistency, r.ga_norm))
        assert r.z_grad_norm_sq is not None
    assert all(r.z_grad_norm_sq is None for r in run_seed(small("fedavg", T=2), 0))


def test_metric_cadence():
    stream = run_seed(replace(small("fedavg", T=7), metric_every=3), 0)
    assert [r.round for r in stream] == [3, 6, 7]


def test_two_seeds_summary_means():
    res = run_experiment(replace(small("fedavg", T=3), seeds=(0, 1)))
    assert sorted(res.streams) == [0, 1] and not res.errors
    s = res.summary()
    finals = [res.streams[k][-1].train_loss for k in (0, 1)]
    assert s["final_train_loss_mean"] == pytest.approx(np.mean(finals), rel=1e-15)
    assert s["best_test_acc_mean"] == pytest.approx(
        np.mean([max(r.test_acc for r in res.streams[k]) for k in (0, 1)]))


def test_failing_seed_is_reported_others_complete(monkeypatch):
    real = orch.build_federation

    def flaky(config, seed):
        if seed == 1:
            raise RuntimeError("boom")
        return real(config, seed)

    monkeypatch.setattr(orch, "build_federation", flaky)
    res = run_experiment(replace(small("fedavg", T=2), seeds=(0, 1, 2)))
    assert sorted(res.streams) == [0, 2]
    assert "boom" in res.errors[1]


def test_validation_rejects_zero_local_steps():
    with pytest.raises(ConfigError, match="K"):
        replace(small(), K=0).validate()
    with pytest.raises(ConfigError):
        replace(small(), rate=0.0).validate()
    with pytest.raises(ConfigError):
        with_data(small(), n_train=601).validate()


def test_round_errors_carry_round_index():
    cfg = small("fedavg", T=3, eta_l=1e300)
    with np.errstate(all="ignore"), pytest.raises(RuntimeError, match=r"round \d+"):
        run_seed(cfg, 0)


def _rm(vals, key):
    out = []
    for i, v in enumerate(vals, start=1):
        kw = dict(round=i, train_loss=1.0, test_acc=0.0, grad_norm_sq=0.0, z_grad_norm_sq=None,
                  consistency=0.0, ga_norm=0.0)
        kw[key] = v
        out.append(RoundMetrics(**kw))
    return out


def test_rounds_to_target_examples():
    assert rounds_to_target(_rm([0.5, 0.8, 0.9], "test_acc"), "test_acc", 0.8) == 2
    assert rounds_to_target(_rm([0.5, 0.6], "test_acc"), "test_acc", 0.8) == math.inf
    assert rounds_to_target(_rm([2.0, 1.0], "train_loss"), "train_loss", 5.0) == 1
    with pytest.raises(ValueError):
        rounds_to_target([], "grad_norm_sq", 1.0)


def test_federation_without_shared_data_averages_clients():
    from conftest import quad_client

    clients = [quad_client(1.0, 1.0, cid=0), quad_client(1.0, 3.0, cid=1)]
    fed = Federation(clients[0].model, clients)
    x = np.array([0.0])
    assert fed.loss(x) == 0.0 and fed.grad(x)[0] == -2.0 and fed.test_accuracy(x) == 0.0


def test_csv_data_source(tmp_path):
    from fedsim.datagen import generate_gaussian_classes, save_csv

    ds = generate_gaussian_classes(40, 3, 2, 2.0, RngStream(0, "data"))
    save_csv(ds, tmp_path / "d.csv")
    cfg = replace(small("fedavg", T=2), data=DataConfig(source="csv", path=str(tmp_path / "d.csv"), n_test=20),
                  m=4, rate=0.5)
    stream = run_seed(cfg, 0)
    assert len(stream) == 2
