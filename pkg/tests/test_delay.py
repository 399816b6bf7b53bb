import math

import numpy as np
import pytest
from conftest import make_env

from hsfl.delay import (
    Assignment,
    InfeasibleAllocation,
    delay_coefficients,
    delay_from_coefficients,
    device_delays,
    fl_device_delay,
    round_delay,
    sl_device_delay,
)


def shannon(frac, bw, p, h, n0):
    return frac * bw * math.log2(1 + p * h / (n0 * frac * bw))


def hand_fl(env, k, frac, fl_ids, batch):
    c, p = env.constants, env.profile
    r0 = min(shannon(1.0, c.broadcast_bandwidth_hz, c.server_tx_power_w, env.draw.h_broadcast[j], c.noise_psd_w_per_hz) for j in fl_ids)
    up = shannon(frac, c.total_bandwidth_hz, c.device_tx_power_w[k], env.draw.h_uplink[k], c.noise_psd_w_per_hz)
    return p.total_bits / r0 + batch * p.total_flops_per_sample / c.device_flops[k] + p.total_bits / up


def hand_sl(env, k, cut, b0, batch):
    c, p = env.constants, env.profile
    up = shannon(b0, c.total_bandwidth_hz, c.device_tx_power_w[k], env.draw.h_uplink[k], c.noise_psd_w_per_hz)
    down = shannon(b0, c.total_bandwidth_hz, c.server_tx_power_w, env.draw.h_downlink[k], c.noise_psd_w_per_hz)
    layers = p.layers
    bits = sum(ly.param_bits for ly in layers[:cut])
    local = sum(ly.flops_per_sample for ly in layers[:cut])
    edge = sum(ly.flops_per_sample for ly in layers[cut:])
    ly = layers[cut - 1]
    per_sample = local / c.device_flops[k] + edge / c.server_flops + ly.fwd_payload_bits / up + ly.bwd_payload_bits / down
    return bits / down + batch * per_sample + bits / up


def test_three_sl_devices_hand_sum():
    env = make_env(3, 3)
    a = Assignment([True] * 3, [2, 3, 6], np.zeros(3), 0.4, [10, 20, 30])
    expected = sum(hand_sl(env, k, cut, 0.4, b) for k, cut, b in zip(range(3), [2, 3, 6], [10, 20, 30]))
    d = round_delay(a, env)
    assert d.t_sl == pytest.approx(expected, rel=1e-12)
    assert d.t_fl == 0.0 and d.t_round == d.t_sl


def test_mixed_round_is_max_of_fl_max_and_sl_sum():
    env = make_env(4, 4)
    sl = np.array([False, True, False, True])
    bw = np.array([0.3, 0.0, 0.25, 0.0])
    batches = np.array([16, 8, 32, 4])
    a = Assignment(sl, [0, 4, 0, 2], bw, 0.45, batches)
    fl_ids = [0, 2]
    t_fl = max(hand_fl(env, k, bw[k], fl_ids, batches[k]) for k in fl_ids)
    t_sl = hand_sl(env, 1, 4, 0.45, 8) + hand_sl(env, 3, 2, 0.45, 4)
    d = round_delay(a, env)
    assert d.t_fl == pytest.approx(t_fl, rel=1e-12)
    assert d.t_sl == pytest.approx(t_sl, rel=1e-12)
    assert d.t_round == pytest.approx(max(t_fl, t_sl), rel=1e-12)
    assert fl_device_delay(0, a, env)["total"] == pytest.approx(d.per_device[0], rel=1e-12)
    assert sl_device_delay(3, 2, 0.45, 4, env)["total"] == pytest.approx(d.per_device[3], rel=1e-12)


def test_coefficients_reproduce_delays_for_any_batch():
    env = make_env(5, 5)
    sl = np.array([True, False, True, False, False])
    a = Assignment(sl, [3, 0, 5, 0, 0], [0, 0.2, 0, 0.2, 0.2], 0.4, np.ones(5))
    coeffs = delay_coefficients(a, env)
    rng = np.random.default_rng(0)
    for _ in range(20):
        xi = rng.integers(1, 200, size=5).astype(float)
        d = round_delay(a.copy(batches=xi), env)
        np.testing.assert_allclose(device_delays(coeffs, xi), d.per_device, rtol=1e-12)
        assert delay_from_coefficients(coeffs, xi) == pytest.approx(d.t_round, rel=1e-12)


def test_fl_broadcast_depends_on_fl_set_only():
    env = make_env(6, 3)
    a = Assignment([False, False, True], [0, 0, 3], [0.3, 0.3, 0], 0.4, [5, 5, 5])
    b = a.copy(sl=np.array([False, False, False]), bandwidth=np.array([0.3, 0.3, 0.4]))
    assert fl_device_delay(0, a, env)["download"] <= fl_device_delay(0, b, env)["download"]


def test_rows_cover_every_component():
    env = make_env(0, 2)
    d = round_delay(Assignment([False, True], [0, 2], [0.5, 0], 0.5, [3, 3]), env)
    rows = list(d.rows())
    assert len(rows) == 8
    assert sum(v for _, _, v in rows) == pytest.approx(d.per_device.sum())


def test_infeasible_inputs():
    env = make_env(0, 2)
    with pytest.raises(InfeasibleAllocation):
        round_delay(Assignment([False, False], [0, 0], [1.0, 0.0], 0.0, [1, 1]), env)
    with pytest.raises(InfeasibleAllocation):
        round_delay(Assignment([True, True], [2, 2], [0, 0], 0.0, [1, 1]), env)
    with pytest.raises(ValueError):
        round_delay(Assignment([True, False], [7, 0], [0, 0.5], 0.5, [1, 1]), env)
    with pytest.raises(ValueError):
        fl_device_delay(0, Assignment([True, False], [2, 0], [0, 0.5], 0.5, [1, 1]), env)
