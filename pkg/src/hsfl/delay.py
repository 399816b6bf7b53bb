"""Per-round learning delay of FL and SL devices and their affine batch coefficients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelDraw, Scenario, broadcast_rate, link_rate
from .model_profile import ModelProfile


class InfeasibleAllocation(ValueError):
    pass


@dataclass(frozen=True)
class RoundEnv:
    """Everything fixed within one round: scenario, channel draw and model profile."""

    scenario: Scenario
    draw: ChannelDraw
    profile: ModelProfile

    @property
    def constants(self):
        return self.scenario.constants

    @property
    def num_devices(self) -> int:
        return self.scenario.num_devices

    @property
    def dataset_sizes(self) -> np.ndarray:
        return self.scenario.dataset_sizes

    def uplink_rate(self, fraction, idx=slice(None)):
        c = self.constants
        return link_rate(fraction, c.total_bandwidth_hz, c.device_tx_power_w[idx], self.draw.h_uplink[idx], c.noise_psd_w_per_hz)

    def downlink_rate(self, fraction, idx=slice(None)):
        c = self.constants
        return link_rate(fraction, c.total_bandwidth_hz, c.server_tx_power_w, self.draw.h_downlink[idx], c.noise_psd_w_per_hz)


@dataclass
class Assignment:
    """Decision vector of one round. ``sl[k]`` is True for split-learning devices.

    ``cuts`` is meaningful for SL devices only, ``bandwidth`` for FL devices only.
    """

    sl: np.ndarray
    cuts: np.ndarray
    bandwidth: np.ndarray
    b0: float
    batches: np.ndarray

    def __post_init__(self):
        self.sl = np.asarray(self.sl, dtype=bool)
        self.cuts = np.asarray(self.cuts, dtype=np.int64)
        self.bandwidth = np.asarray(self.bandwidth, dtype=float)
        self.batches = np.asarray(self.batches, dtype=float)
        self.b0 = float(self.b0)

    @property
    def num_sl(self) -> int:
        return int(self.sl.sum())

    def copy(self, **changes) -> "Assignment":
        fields = dict(sl=self.sl.copy(), cuts=self.cuts.copy(), bandwidth=self.bandwidth.copy(), b0=self.b0, batches=self.batches.copy())
        fields.update(changes)
        return Assignment(**fields)


@dataclass(frozen=True)
class RoundDelays:
    download: np.ndarray
    compute: np.ndarray
    communicate: np.ndarray
    upload: np.ndarray
    sl: np.ndarray
    t_fl: float
    t_sl: float

    @property
    def per_device(self) -> np.ndarray:
        return self.download + self.compute + self.communicate + self.upload

    @property
    def t_round(self) -> float:
        return max(self.t_fl, self.t_sl)

    def rows(self):
        """(device, component, seconds) rows for CSV export."""
        for k in range(len(self.sl)):
            for name in ("download", "compute", "communicate", "upload"):
                yield k, name, float(getattr(self, name)[k])


@dataclass(frozen=True)
class DelayCoefficients:
    """``T_k(xi) = xi * gamma[k] + lam[k]``; the SL mask picks which formula produced each entry."""

    gamma: np.ndarray
    lam: np.ndarray
    sl: np.ndarray

    @property
    def fl(self) -> np.ndarray:
        return ~self.sl


def fl_device_delay(k: int, assignment: Assignment, env: RoundEnv) -> dict:
    c = env.constants
    if assignment.sl[k]:
        raise ValueError(f"device {k} is not in FL mode")
    b = assignment.bandwidth[k]
    if b <= 0:
        raise InfeasibleAllocation(f"FL device {k} has no uplink bandwidth")
    r0 = broadcast_rate(c, env.draw, ~assignment.sl)
    s = env.profile.total_bits
    download = s / r0
    train = assignment.batches[k] * env.profile.total_flops_per_sample / c.device_flops[k]
    upload = s / env.uplink_rate(b, k)
    return {"download": download, "train": train, "upload": upload, "total": download + train + upload}


def sl_device_delay(k: int, cut: int, b0: float, batch: float, env: RoundEnv) -> dict:
    c = env.constants
    p = env.profile
    if not 1 <= cut <= p.num_layers:
        raise ValueError(f"cut layer {cut} outside 1..{p.num_layers}")
    if b0 <= 0:
        raise InfeasibleAllocation("SL devices need a positive bandwidth share b0")
    r_down = env.downlink_rate(b0, k)
    r_up = env.uplink_rate(b0, k)
    bits = p.local_bits_table[cut - 1]
    download = bits / r_down
    compute = batch * (p.local_flops_table[cut - 1] / c.device_flops[k] + p.edge_flops_table[cut - 1] / c.server_flops)
    communicate = batch * (p.fwd_payload_table[cut - 1] / r_up + p.bwd_payload_table[cut - 1] / r_down)
    upload = bits / r_up
    return {
        "download": download,
        "compute": compute,
        "communicate": communicate,
        "upload": upload,
        "total": download + compute + communicate + upload,
    }


def _components(assignment: Assignment, env: RoundEnv):
    k = env.num_devices
    c = env.constants
    p = env.profile
    sl = assignment.sl
    fl = ~sl
    download = np.zeros(k)
    compute = np.zeros(k)
    communicate = np.zeros(k)
    upload = np.zeros(k)
    if fl.any():
        if np.any(assignment.bandwidth[fl] <= 0):
            raise InfeasibleAllocation("FL device without uplink bandwidth")
        r0 = broadcast_rate(c, env.draw, fl)
        download[fl] = p.total_bits / r0
        compute[fl] = assignment.batches[fl] * p.total_flops_per_sample / c.device_flops[fl]
        upload[fl] = p.total_bits / env.uplink_rate(assignment.bandwidth[fl], fl)
    if sl.any():
        if assignment.b0 <= 0:
            raise InfeasibleAllocation("SL devices need a positive bandwidth share b0")
        cut = assignment.cuts[sl] - 1
        if np.any(cut < 0) or np.any(cut >= p.num_layers):
            raise ValueError("SL cut layer out of range")
        r_down = env.downlink_rate(assignment.b0, sl)
        r_up = env.uplink_rate(assignment.b0, sl)
        bits = p.local_bits_table[cut]
        download[sl] = bits / r_down
        upload[sl] = bits / r_up
        per_sample_cmp = p.local_flops_table[cut] / c.device_flops[sl] + p.edge_flops_table[cut] / c.server_flops
        per_sample_com = p.fwd_payload_table[cut] / r_up + p.bwd_payload_table[cut] / r_down
        compute[sl] = assignment.batches[sl] * per_sample_cmp
        communicate[sl] = assignment.batches[sl] * per_sample_com
    return download, compute, communicate, upload


def round_delay(assignment: Assignment, env: RoundEnv) -> RoundDelays:
    download, compute, communicate, upload = _components(assignment, env)
    total = download + compute + communicate + upload
    sl = assignment.sl
    t_fl = float(total[~sl].max()) if (~sl).any() else 0.0
    t_sl = float(total[sl].sum()) if sl.any() else 0.0
    return RoundDelays(download, compute, communicate, upload, sl.copy(), t_fl, t_sl)


def delay_coefficients(assignment: Assignment, env: RoundEnv) -> DelayCoefficients:
    """Split each device's delay into a per-sample slope and a batch-independent offset."""
    probe = assignment.copy(batches=np.ones(env.num_devices))
    download, compute, communicate, upload = _components(probe, env)
    # with xi = 1 the compute/communicate terms are exactly the per-sample slopes
    gamma = compute + communicate
    lam = download + upload
    return DelayCoefficients(gamma=gamma, lam=lam, sl=assignment.sl.copy())


def device_delays(coeffs: DelayCoefficients, batches) -> np.ndarray:
    return np.asarray(batches, dtype=float) * coeffs.gamma + coeffs.lam


def delay_from_coefficients(coeffs: DelayCoefficients, batches) -> float:
    t = device_delays(coeffs, batches)
    t_fl = t[coeffs.fl].max() if coeffs.fl.any() else 0.0
    t_sl = t[coeffs.sl].sum() if coeffs.sl.any() else 0.0
    return float(max(t_fl, t_sl))
