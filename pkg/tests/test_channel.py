import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsfl.channel import (
    ChannelDraw,
    broadcast_rate,
    dbm_per_hz_to_w,
    draw_round_channels,
    fraction_for_rate,
    link_rate,
    make_scenario,
    path_loss_db,
    place_devices,
)

NOISE = dbm_per_hz_to_w(-174.0)
B = 1.4e6


@pytest.mark.parametrize("d, expected", [(100.0, 90.5), (1000.0, 128.1), (10.0, 52.9)])
def test_path_loss(d, expected):
    assert path_loss_db(d) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("d", [0.0, -5.0])
def test_path_loss_rejects_nonpositive(d):
    with pytest.raises(ValueError):
        path_loss_db(d)


def test_noise_conversion():
    assert NOISE == pytest.approx(10 ** (-20.4), rel=1e-12)


def test_zero_bandwidth_gives_zero_rate():
    assert link_rate(0.0, B, 0.1, 1e-9, NOISE) == 0.0


def test_unit_snr_gives_bandwidth():
    b = 0.25
    gain = NOISE * b * B / 0.1
    assert link_rate(b, B, 0.1, gain, NOISE) == pytest.approx(b * B, rel=1e-12)


def test_rate_increasing_and_concave_on_grid():
    b = np.linspace(1e-4, 1.0, 2001)
    r = link_rate(b, B, 0.1, 1e-10, NOISE)
    d1 = np.diff(r)
    assert np.all(d1 > 0)
    assert np.all(np.diff(d1) < 1e-6 * r.max())


def test_broadcast_rate_high_precision():
    mpmath.mp.dps = 40
    expected = mpmath.mpf(B) * mpmath.log(1 + mpmath.mpf(1.0) * mpmath.mpf("1e-9") / (mpmath.mpf(10) ** mpmath.mpf("-20.4") * B), 2)
    c = make_scenario([1], np.random.default_rng(0)).constants
    draw = ChannelDraw(np.array([1e-9]), np.array([1e-9]), np.array([1e-9]))
    assert broadcast_rate(c, draw, [True]) == pytest.approx(float(expected), rel=1e-12)


def test_broadcast_rate_uses_weakest_device():
    c = make_scenario([1, 1], np.random.default_rng(0)).constants
    draw = ChannelDraw(np.array([1e-9, 1e-11]), np.ones(2), np.ones(2))
    weak = ChannelDraw(np.array([1e-11]), np.ones(1), np.ones(1))
    c1 = make_scenario([1], np.random.default_rng(0)).constants
    assert broadcast_rate(c, draw, [True, True]) == pytest.approx(broadcast_rate(c1, weak, [True]))
    assert broadcast_rate(c, draw, [False, False]) is None


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-4, 1.0), st.floats(1e-13, 1e-7))
def test_fraction_for_rate_inverts_link_rate(b, gain):
    r = link_rate(b, B, 0.1, gain, NOISE)
    assert fraction_for_rate(r, B, 0.1, gain, NOISE) == pytest.approx(b, rel=1e-8)


def test_fraction_for_rate_limits():
    assert fraction_for_rate(0.0, B, 0.1, 1e-9, NOISE) == 0.0
    cap = 0.1 * 1e-9 / (NOISE * np.log(2))
    assert np.isinf(fraction_for_rate(cap * 1.01, B, 0.1, 1e-9, NOISE))


def test_fading_mean_is_one():
    sc = make_scenario(np.ones(1000, dtype=int), np.random.default_rng(1))
    rng = np.random.default_rng(2)
    ratios = [draw_round_channels(sc, rng).h_uplink / sc.mean_gains for _ in range(100)]
    assert np.mean(ratios) == pytest.approx(1.0, abs=0.02)


def test_fading_off_returns_path_loss():
    sc = make_scenario([5, 5], np.random.default_rng(1))
    draw = draw_round_channels(sc, np.random.default_rng(0), fading=False)
    np.testing.assert_array_equal(draw.h_downlink, sc.mean_gains)


def test_draws_reproducible_and_independent():
    sc = make_scenario([5, 5, 5], np.random.default_rng(1))
    a = draw_round_channels(sc, np.random.default_rng(9))
    b = draw_round_channels(sc, np.random.default_rng(9))
    np.testing.assert_array_equal(a.h_uplink, b.h_uplink)
    assert not np.array_equal(a.h_uplink, a.h_downlink)


def test_placement_within_annulus():
    d = place_devices(5000, 100.0, np.random.default_rng(0), 10.0)
    assert d.min() >= 10.0 and d.max() <= 100.0


def test_scenario_defaults():
    sc = make_scenario(np.full(30, 100), np.random.default_rng(0))
    c = sc.constants
    assert sc.num_devices == 30
    assert c.server_tx_power_w == 1.0 and np.all(c.device_tx_power_w == 0.1)
    assert c.broadcast_bandwidth_hz == c.total_bandwidth_hz == 1.4e6
    assert c.server_flops == 100e8 * 16
    assert np.all((c.device_flops >= 1e8 * 16) & (c.device_flops <= 8e8 * 16))


def test_scenario_validation():
    with pytest.raises(ValueError):
        make_scenario([0, 5], np.random.default_rng(0))
    with pytest.raises(ValueError):
        make_scenario([1], np.random.default_rng(0), server_tx_power_w=0.0)
