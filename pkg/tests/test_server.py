import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsim.client import LocalResult
from fedsim.methods import MethodConfig
from fedsim.numerics import RngStream
from fedsim.server import (
    aggregate_average_descent,
    aggregate_vhat,
    global_adam_step,
    init_server,
    mean_offset,
    participants,
    sample_clients,
    scaffold_update_controls,
    server_update,
    update_ga,
)


def res(offset, vhat=None, **aux):
    return LocalResult(np.atleast_1d(np.asarray(offset, dtype=float)),
                       None if vhat is None else np.atleast_1d(np.asarray(vhat, dtype=float)), aux)


def state(x, method="fedavg", **kw):
    s = init_server(np.atleast_1d(np.asarray(x, dtype=float)), MethodConfig.default(method, **kw))
    return s


def test_zero_offsets_leave_x():
    s = state([1.0, -2.0])
    out = aggregate_average_descent(s, [(0, res([0, 0])), (1, res([0, 0]))])
    assert np.array_equal(out, s.x)


def test_average_descent_is_mean_of_finals():
    s = state([1.0])
    # finals 0 and 2 -> offsets 1 and -1
    out = aggregate_average_descent(s, [(0, res([1.0])), (1, res([-1.0]))])
    assert out.tolist() == [1.0]
    single = aggregate_average_descent(s, [(3, res([0.4]))])
    assert single[0] == pytest.approx(0.6, abs=1e-15)


@settings(max_examples=30)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.floats(-3, 3))
def test_unit_server_rate_gives_mean_of_local_models(finals, x):
    s = state([x])
    results = [(i, res([x - f])) for i, f in enumerate(finals)]
    assert aggregate_average_descent(s, results)[0] == pytest.approx(np.mean(finals), abs=1e-12)


def test_update_ga_examples():
    assert np.array_equal(update_ga(np.ones(3), np.ones(3), 1.0, 0.1, 5), np.zeros(3))
    assert update_ga(np.array([0.1]), np.array([0.0]), 1.0, 0.001, 10)[0] == pytest.approx(10.0, rel=1e-12)
    with pytest.raises(ValueError):
        update_ga(np.zeros(1), np.zeros(1), 1.0, 0.0, 10)


def test_aggregate_vhat_examples():
    v = np.array([0.3, 0.7])
    assert np.array_equal(aggregate_vhat([(0, res([0, 0], v)), (1, res([0, 0], v))]), v)
    out = aggregate_vhat([(0, res([0, 0], [1, 4])), (1, res([0, 0], [3, 2]))])
    assert out.tolist() == [2.0, 3.0]
    with pytest.raises(ValueError, match="vhat"):
        aggregate_vhat([(0, res([0]))])


@settings(max_examples=30)
@given(st.lists(st.lists(st.floats(1e-16, 10), min_size=3, max_size=3), min_size=1, max_size=5))
def test_aggregate_vhat_keeps_floor(vs):
    out = aggregate_vhat([(i, res(np.zeros(3), v)) for i, v in enumerate(vs)])
    assert np.all(out >= 1e-16 * (1 - 1e-12))


def test_adam_zero_pseudo_gradient_never_moves():
    s = state([0.5, -0.5], "fedadam")
    for _ in range(5):
        s = global_adam_step(s, np.zeros(2))
    assert s.x.tolist() == [0.5, -0.5]


def test_adam_first_step_hand_value():
    s = state([0.0], "fedadam")
    out = global_adam_step(s, np.array([1.0]), "adam", 0.9, 0.99)
    assert out.adam_m[0] == pytest.approx(0.9, abs=1e-15)
    assert out.adam_v[0] == pytest.approx(0.9901, abs=1e-15)
    assert abs(-out.x[0] - 0.1 * 0.9 / math.sqrt(0.9901)) <= 1e-12
    assert abs(-out.x[0] - 0.09045) < 1e-5


def test_amsgrad_vhat_nondecreasing():
    s = state(np.zeros(3), "fedadam", server_variant="amsgrad")
    g = np.random.default_rng(0)
    prev = s.adam_vhat
    for _ in range(20):
        s = global_adam_step(s, g.normal(size=3) * g.uniform(0, 2), "amsgrad")
        assert np.all(s.adam_vhat >= prev)
        prev = s.adam_vhat


def test_scaffold_controls():
    s = state(np.zeros(2), "scaffold")
    assert s.controls == {} and not s.g_a.any()
    c = np.array([0.5, -1.0])
    controls, g_a = scaffold_update_controls(s, [(0, res([0, 0], control=c)), (4, res([0, 0], control=c))])
    assert np.array_equal(g_a, c) and set(controls) == {0, 4}
    c0, c1 = np.array([1.0, 2.0]), np.array([3.0, -2.0])
    _, g_a = scaffold_update_controls(s, [(0, res([0, 0], control=c0)), (1, res([0, 0], control=c1))])
    assert np.array_equal(g_a, (c0 + c1) / 2)
    with pytest.raises(ValueError, match="control"):
        scaffold_update_controls(s, [(0, res([0, 0]))])


def test_participants_and_sampling():
    assert participants(20, 0.1) == 2
    assert participants(30, 0.1) == 3
    assert participants(5, 0.01) == 1
    assert participants(4, 1.0) == 4
    ids = sample_clients(20, 0.25, RngStream(0, "server", 0))
    assert len(ids) == 5 and len(set(ids.tolist())) == 5 and np.all(np.diff(ids) > 0)
    with pytest.raises(ValueError):
        sample_clients(20, 0.0, RngStream(0))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_participation_counts_within_four_sigma(seed):
    m, rate, T = 20, 0.1, 2000
    S = participants(m, rate)
    counts = np.zeros(m)
    for t in range(T):
        counts[sample_clients(m, rate, RngStream(seed, "server", t))] += 1
    mean = T * S / m
    sigma = math.sqrt(T * (S / m) * (1 - S / m))
    assert counts.sum() == T * S
    assert np.all(np.abs(counts - mean) <= 4 * sigma)


def test_server_update_fedlada_sets_ga_vavg_and_decays():
    m = MethodConfig.default("fedlada", alpha=0.5, eta_l=0.01, decay=0.9)
    s = init_server(np.array([1.0, 1.0]), m)
    results = [(0, res([0.2, 0.0], [0.5, 0.1])), (1, res([0.4, 0.2], [0.3, 0.3]))]
    out = server_update(m, s, results, K=4)
    np.testing.assert_allclose(out.x, [0.7, 0.9])
    np.testing.assert_allclose(out.g_a, np.array([0.3, 0.1]) / (1.0 * 0.01 * 4))
    np.testing.assert_allclose(out.v_avg, [0.4, 0.2])
    assert out.round == 1 and out.eta_l == pytest.approx(0.009) and out.eta_g == 1.0
    assert np.array_equal(out.x_prev, s.x)


def test_server_update_fedadam_decays_server_rate():
    m = MethodConfig.default("fedadam", decay=0.5)
    s = init_server(np.zeros(1), m)
    out = server_update(m, s, [(0, res([1.0]))], K=2)
    assert out.eta_g == pytest.approx(0.05) and out.eta_l == pytest.approx(0.05)
    m = MethodConfig.default("fedadam_cm", decay=0.5)
    out = server_update(m, init_server(np.zeros(1), m), [(0, res([1.0]))], K=2)
    assert out.g_a[0] == pytest.approx(1.0 / (0.1 * 2))


def test_empty_results_rejected():
    with pytest.raises(ValueError):
        mean_offset([])
