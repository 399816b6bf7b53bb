"""Cut-layer selection and bandwidth allocation for a fixed mode vector.

The FL bandwidth split equalises FL delays through a bisection on the common
delay; the SL share ``b0`` is bisected until FL and SL delays balance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import lambertw

from .channel import LN2, broadcast_rate
from .delay import Assignment, RoundEnv

DEFAULT_EPS2 = 3e-3
DEFAULT_EPS3 = 1e-3


@dataclass
class AllocationResult:
    b0: float
    bandwidth: np.ndarray  # per device, zero for SL devices
    cuts: np.ndarray  # per device, zero for FL devices
    t_fl: float
    t_sl: float
    converged: bool = True
    iterations: int = 0
    trace: list = field(default_factory=list, repr=False)

    @property
    def t_round(self) -> float:
        return max(self.t_fl, self.t_sl)

    def assignment(self, sl, batches) -> Assignment:
        return Assignment(sl=sl, cuts=self.cuts, bandwidth=self.bandwidth, b0=self.b0, batches=batches)


def sl_delay_matrix(env: RoundEnv, idx: np.ndarray, b0: float, batches: np.ndarray) -> np.ndarray:
    """``T^S_k(l)`` for the devices ``idx`` (rows) and every cut layer (columns)."""
    c = env.constants
    p = env.profile
    r_down = env.downlink_rate(b0, idx)[:, None]
    r_up = env.uplink_rate(b0, idx)[:, None]
    xi = np.asarray(batches, dtype=float)[idx][:, None]
    f_dev = c.device_flops[idx][:, None]
    bits = p.local_bits_table[None, :]
    per_sample = (
        p.local_flops_table[None, :] / f_dev
        + p.edge_flops_table[None, :] / c.server_flops
        + p.fwd_payload_table[None, :] / r_up
        + p.bwd_payload_table[None, :] / r_down
    )
    return bits / r_down + xi * per_sample + bits / r_up


def optimal_cut_layer(k: int, b0: float, batch: float, env: RoundEnv) -> int:
    """Exhaustive argmin over cut layers; ties go to the smallest layer index."""
    if b0 <= 0:
        raise ValueError("b0 must be positive")
    batches = np.zeros(env.num_devices)
    batches[k] = batch
    row = sl_delay_matrix(env, np.array([k]), b0, batches)[0]
    return int(np.argmin(row)) + 1


def optimal_cuts(env: RoundEnv, sl_mask: np.ndarray, b0: float, batches) -> tuple[np.ndarray, float]:
    """Cuts for every SL device at share ``b0`` and the resulting SL delay."""
    idx = np.flatnonzero(sl_mask)
    cuts = np.zeros(env.num_devices, dtype=np.int64)
    if idx.size == 0:
        return cuts, 0.0
    m = sl_delay_matrix(env, idx, b0, batches)
    best = np.argmin(m, axis=1)
    cuts[idx] = best + 1
    return cuts, float(m[np.arange(idx.size), best].sum())


def _fl_fixed_delay(env: RoundEnv, fl_mask: np.ndarray, batches) -> np.ndarray:
    """Download plus training delay of each FL device (bandwidth independent)."""
    c = env.constants
    p = env.profile
    r0 = broadcast_rate(c, env.draw, fl_mask)
    xi = np.asarray(batches, dtype=float)[fl_mask]
    return p.total_bits / r0 + xi * p.total_flops_per_sample / c.device_flops[fl_mask]


class _FractionSolver:
    """Bandwidth each FL device needs to finish its upload within a common deadline."""

    def __init__(self, env: RoundEnv, idx, fixed):
        c = env.constants
        self.fixed = fixed
        self.snr_full = c.device_tx_power_w[idx] * env.draw.h_uplink[idx] / (c.noise_psd_w_per_hz * c.total_bandwidth_hz)
        # rate needed = S / budget; in normalised form c = S ln2 / (B a budget)
        self.scale = env.profile.total_bits * LN2 / (c.total_bandwidth_hz * self.snr_full)

    def __call__(self, d) -> np.ndarray:
        budget = d - self.fixed
        out = np.full(budget.shape, np.inf)
        pos = budget > 0
        cc = self.scale[pos] / budget[pos]
        ok = cc < 1
        if ok.any():
            c_ok = cc[ok]
            z = -lambertw(-c_ok * np.exp(-c_ok), k=-1).real / c_ok
            vals = np.full(cc.shape, np.inf)
            vals[ok] = self.snr_full[pos][ok] / (z - 1.0)
            out[pos] = vals
        return out


def fl_bandwidth_allocation(
    env: RoundEnv,
    fl_mask,
    b0: float,
    batches,
    eps2: float = DEFAULT_EPS2,
    max_iter: int = 200,
    trace: list | None = None,
) -> tuple[np.ndarray, float, bool]:
    """Equal-delay FL bandwidth allocation by bisection on the common delay.

    Returns the per-device fractions (zero outside the FL set), the resulting
    FL delay and whether the sum landed in ``[1 - b0 - eps2, 1 - b0]``.
    """
    fl_mask = np.asarray(fl_mask, dtype=bool)
    idx = np.flatnonzero(fl_mask)
    if idx.size == 0:
        raise ValueError("FL set is empty")
    if not 0 <= b0 < 1:
        raise ValueError("b0 must lie in [0, 1)")
    if eps2 <= 0:
        raise ValueError("eps2 must be positive")
    avail = 1.0 - b0
    fixed = _fl_fixed_delay(env, fl_mask, batches)
    s = env.profile.total_bits
    d_lo = float(fixed.max())
    equal = np.full(idx.size, avail / idx.size)
    d_hi = float(np.max(fixed + s / env.uplink_rate(equal, idx)))

    out = np.zeros(env.num_devices)
    converged = False
    solve = _FractionSolver(env, idx, fixed)
    # inverting the rate loses a few ulps, so sums this close to the budget count as on it
    cap = avail * (1.0 + 1e-12)
    b = solve(d_hi)
    # a lone FL device sits exactly on the upper bracket
    if avail - eps2 <= b.sum() <= cap:
        converged = True
    for it in range(0 if converged else max_iter):
        d = 0.5 * (d_lo + d_hi)
        b = solve(d)
        total = b.sum()
        if trace is not None:
            trace.append((it, d_lo, d_hi, d, total))
        if total < avail - eps2:
            d_hi = d
        elif total > cap:
            d_lo = d
        else:
            converged = True
            break
    if not converged:
        # fall back on the feasible upper bracket
        b = solve(d_hi)
        if not np.all(np.isfinite(b)) or b.sum() > cap:
            b = equal
    if b.sum() > avail:
        b = b * (avail / b.sum())
    out[idx] = b
    t_fl = float(np.max(fixed + s / env.uplink_rate(b, idx)))
    return out, t_fl, converged


def sl_bandwidth_split(
    env: RoundEnv,
    sl_mask,
    batches,
    eps2: float = DEFAULT_EPS2,
    eps3: float = DEFAULT_EPS3,
    max_iter: int = 200,
    trace: list | None = None,
) -> AllocationResult:
    """Choose ``b0`` (plus cuts and FL shares) so that FL and SL delays balance."""
    sl_mask = np.asarray(sl_mask, dtype=bool)
    fl_mask = ~sl_mask
    if eps3 <= 0:
        raise ValueError("eps3 must be positive")
    if not sl_mask.any():
        bw, t_fl, ok = fl_bandwidth_allocation(env, fl_mask, 0.0, batches, eps2)
        return AllocationResult(0.0, bw, np.zeros(env.num_devices, dtype=np.int64), t_fl, 0.0, ok)
    if not fl_mask.any():
        cuts, t_sl = optimal_cuts(env, sl_mask, 1.0, batches)
        return AllocationResult(1.0, np.zeros(env.num_devices), cuts, 0.0, t_sl, True)

    lo, hi = 0.0, 1.0
    best = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        b0 = 0.5 * (lo + hi)
        cuts, t_sl = optimal_cuts(env, sl_mask, b0, batches)
        bw, t_fl, _ = fl_bandwidth_allocation(env, fl_mask, b0, batches, eps2)
        if trace is not None:
            trace.append((it, b0, t_sl, t_fl))
        cand = AllocationResult(b0, bw, cuts, t_fl, t_sl, False, it)
        if best is None or cand.t_round < best.t_round:
            best = cand
        if abs(t_sl - t_fl) <= eps3:
            converged = True
            break
        if t_sl > t_fl:
            lo = b0
        else:
            hi = b0
        if hi - lo < 1e-15:
            break
    if converged:
        cand.converged = True
        return cand
    # FL delays only land inside a tolerance band, so the balance point can sit on a jump
    best.iterations = it
    return best
