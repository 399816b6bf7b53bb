"""Wireless scenario generation and transmission rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import lambertw

LN2 = np.log(2.0)


def dbm_per_hz_to_w(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class SystemConstants:
    broadcast_bandwidth_hz: float
    total_bandwidth_hz: float
    server_tx_power_w: float
    device_tx_power_w: np.ndarray
    noise_psd_w_per_hz: float
    server_flops: float
    device_flops: np.ndarray
    flops_per_cycle: float = 16.0

    def __post_init__(self):
        object.__setattr__(self, "device_tx_power_w", np.asarray(self.device_tx_power_w, dtype=float))
        object.__setattr__(self, "device_flops", np.asarray(self.device_flops, dtype=float))
        scalars = (
            self.broadcast_bandwidth_hz,
            self.total_bandwidth_hz,
            self.server_tx_power_w,
            self.noise_psd_w_per_hz,
            self.server_flops,
            self.flops_per_cycle,
        )
        if min(scalars) <= 0 or np.any(self.device_tx_power_w <= 0) or np.any(self.device_flops <= 0):
            raise ValueError("system constants must be strictly positive")


@dataclass(frozen=True)
class Scenario:
    """Static part of the environment: placement, hardware and local data sizes."""

    distances_m: np.ndarray
    constants: SystemConstants
    dataset_sizes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "distances_m", np.asarray(self.distances_m, dtype=float))
        object.__setattr__(self, "dataset_sizes", np.asarray(self.dataset_sizes, dtype=np.int64))
        k = len(self.distances_m)
        if len(self.dataset_sizes) != k or len(self.constants.device_flops) != k:
            raise ValueError("per-device arrays must all have length num_devices")
        if np.any(self.dataset_sizes < 1):
            raise ValueError("every device needs at least one sample")

    @property
    def num_devices(self) -> int:
        return len(self.distances_m)

    @property
    def mean_gains(self) -> np.ndarray:
        return 10.0 ** (-path_loss_db(self.distances_m) / 10.0)


@dataclass(frozen=True)
class ChannelDraw:
    h_broadcast: np.ndarray
    h_uplink: np.ndarray
    h_downlink: np.ndarray


def path_loss_db(distance_m):
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = 128.1 + 37.6 * np.log10(d / 1000.0)
    return float(out) if out.ndim == 0 else out


def draw_round_channels(scenario: Scenario, rng: np.random.Generator, fading: bool = True) -> ChannelDraw:
    """Block-fading draw: path loss times unit-mean exponential (Rayleigh power) per link."""
    g = scenario.mean_gains
    if fading:
        f = rng.exponential(1.0, size=(3, scenario.num_devices))
    else:
        f = np.ones((3, scenario.num_devices))
    return ChannelDraw(h_broadcast=g * f[0], h_uplink=g * f[1], h_downlink=g * f[2])


def link_rate(fraction, total_bandwidth_hz, tx_power_w, gain, noise_psd):
    """Shannon rate ``bB log2(1 + p h / (sigma b B))``; zero bandwidth gives zero rate."""
    b = np.asarray(fraction, dtype=float)
    bw = b * total_bandwidth_hz
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = bw * np.log2(1.0 + tx_power_w * np.asarray(gain) / (noise_psd * bw))
    rate = np.where(b > 0, rate, 0.0)
    return float(rate) if rate.ndim == 0 else rate


def fraction_for_rate(rate, total_bandwidth_hz, tx_power_w, gain, noise_psd):
    """Inverse of :func:`link_rate` in the bandwidth fraction.

    Returns ``inf`` where the rate exceeds the infinite-bandwidth limit
    ``p h / (sigma ln 2)``.
    """
    rate = np.asarray(rate, dtype=float)
    snr_full = tx_power_w * np.asarray(gain) / (noise_psd * total_bandwidth_hz)
    # b ln(1 + a/b) = q  <=>  ln(z)/(z-1) = c with z = 1 + a/b, c = q/a
    q = rate * LN2 / total_bandwidth_hz
    c = q / snr_full
    out = np.full(np.broadcast(c, snr_full).shape, np.inf)
    c_b = np.broadcast_to(c, out.shape)
    a_b = np.broadcast_to(snr_full, out.shape)
    ok = (c_b > 0) & (c_b < 1)
    if np.any(ok):
        cc = c_b[ok]
        w = lambertw(-cc * np.exp(-cc), k=-1).real
        z = -w / cc
        out[ok] = a_b[ok] / (z - 1.0)
    out[c_b <= 0] = 0.0
    return float(out) if out.ndim == 0 else out


def broadcast_rate(constants: SystemConstants, draw: ChannelDraw, fl_mask) -> float | None:
    """Common broadcast rate to the FL set (bottlenecked by the weakest device).

    ``None`` when the FL set is empty: nothing is broadcast.
    """
    fl_mask = np.asarray(fl_mask, dtype=bool)
    if not fl_mask.any():
        return None
    b0 = constants.broadcast_bandwidth_hz
    rates = b0 * np.log2(
        1.0 + constants.server_tx_power_w * draw.h_broadcast[fl_mask] / (constants.noise_psd_w_per_hz * b0)
    )
    return float(rates.min())


def place_devices(num_devices, radius_m, rng, min_distance_m=10.0):
    """Uniform placement over the annulus ``[min_distance_m, radius_m]`` around the server."""
    u = rng.uniform((min_distance_m / radius_m) ** 2, 1.0, size=num_devices)
    return radius_m * np.sqrt(u)


def make_scenario(
    dataset_sizes,
    rng: np.random.Generator,
    *,
    radius_m: float = 100.0,
    min_distance_m: float = 10.0,
    distances_m=None,
    server_tx_power_w: float = 1.0,
    device_tx_power_w=0.1,
    broadcast_bandwidth_hz: float = 1.4e6,
    total_bandwidth_hz: float = 1.4e6,
    noise_psd_dbm_per_hz: float = -174.0,
    server_cycles_per_s: float = 100e8,
    device_cycles_range=(1e8, 8e8),
    flops_per_cycle: float = 16.0,
) -> Scenario:
    dataset_sizes = np.asarray(dataset_sizes)
    k = len(dataset_sizes)
    if distances_m is None:
        distances_m = place_devices(k, radius_m, rng, min_distance_m)
    cycles = rng.uniform(device_cycles_range[0], device_cycles_range[1], size=k)
    constants = SystemConstants(
        broadcast_bandwidth_hz=broadcast_bandwidth_hz,
        total_bandwidth_hz=total_bandwidth_hz,
        server_tx_power_w=server_tx_power_w,
        device_tx_power_w=np.broadcast_to(np.asarray(device_tx_power_w, dtype=float), (k,)).copy(),
        noise_psd_w_per_hz=dbm_per_hz_to_w(noise_psd_dbm_per_hz),
        server_flops=server_cycles_per_s * flops_per_cycle,
        device_flops=cycles * flops_per_cycle,
        flops_per_cycle=flops_per_cycle,
    )
    return Scenario(distances_m=np.asarray(distances_m, dtype=float), constants=constants, dataset_sizes=dataset_sizes)
