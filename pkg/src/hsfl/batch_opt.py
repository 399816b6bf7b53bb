"""Batch-size optimisation for fixed modes, cuts and bandwidths.

The subproblem ``min tau + sum rho2/xi`` subject to per-device FL delays and
the summed SL delay staying below ``tau`` is solved through its Lagrangian
dual by projected subgradient ascent, then rounded to integer batches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .delay import DelayCoefficients, device_delays

DEFAULT_EPS4 = 1e-6


@dataclass
class DualState:
    lam: np.ndarray  # per device; only FL entries are used
    mu: float
    j: int = 1

    def residual(self, coeffs: DelayCoefficients) -> float:
        return abs(1.0 - self.lam[coeffs.fl].sum() - (self.mu if coeffs.sl.any() else 0.0))


@dataclass
class BatchSolution:
    xi: np.ndarray
    tau: float
    u2: float
    converged: bool = True
    iterations: int = 0
    kkt_residual: float = 0.0
    duality_gap: float = 0.0
    dual: DualState | None = None
    overshoot: float = 0.0
    trace: list = field(default_factory=list, repr=False)

    def feasible(self, dataset_sizes, integral=False, tol=1e-9) -> bool:
        ok = bool(np.all(self.xi >= 1 - tol) and np.all(self.xi <= np.asarray(dataset_sizes) + tol))
        if integral:
            ok = ok and bool(np.all(self.xi == np.round(self.xi)))
        return ok


def round_delays(coeffs: DelayCoefficients, xi) -> tuple[float, float]:
    t = device_delays(coeffs, xi)
    t_fl = float(t[coeffs.fl].max()) if coeffs.fl.any() else 0.0
    t_sl = float(t[coeffs.sl].sum()) if coeffs.sl.any() else 0.0
    return t_fl, t_sl


def u2_value(coeffs: DelayCoefficients, xi, rho2: float, gamma2: float = 0.0) -> float:
    """``T(xi) + sum rho2/xi + Gamma2`` with the round delay taken from its definition."""
    xi = np.asarray(xi, dtype=float)
    return max(round_delays(coeffs, xi)) + float(np.sum(rho2 / xi)) + gamma2


def tau_bounds(coeffs: DelayCoefficients, dataset_sizes) -> tuple[float, float]:
    lb = max(round_delays(coeffs, np.ones(len(coeffs.gamma))))
    ub = max(round_delays(coeffs, np.asarray(dataset_sizes, dtype=float)))
    return lb, ub


def stationary_batch(gamma, multiplier, rho2: float):
    """Zero of ``-rho2/xi^2 + multiplier * gamma``; a zero multiplier gives ``+inf``."""
    if rho2 <= 0:
        raise ValueError("rho2 must be positive")
    denom = np.asarray(multiplier, dtype=float) * np.asarray(gamma, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(denom > 0, np.sqrt(rho2 / np.where(denom > 0, denom, 1.0)), np.inf)
    return float(out) if out.ndim == 0 else out


def clamp_batch(xi0, dataset_sizes):
    out = np.maximum(1.0, np.minimum(xi0, dataset_sizes))
    return float(out) if np.ndim(out) == 0 else out


def _multipliers_per_device(dual: DualState, coeffs: DelayCoefficients) -> np.ndarray:
    return np.where(coeffs.sl, dual.mu, dual.lam)


def batch_for_dual(dual: DualState, coeffs: DelayCoefficients, dataset_sizes, rho2: float) -> np.ndarray:
    return clamp_batch(stationary_batch(coeffs.gamma, _multipliers_per_device(dual, coeffs), rho2), dataset_sizes)


def tau_star(dual: DualState, coeffs: DelayCoefficients, dataset_sizes, xi_star, eps4: float = DEFAULT_EPS4) -> float:
    """Minimiser of the Lagrangian in ``tau``: interior when the multipliers sum to one."""
    if eps4 <= 0:
        raise ValueError("eps4 must be positive")
    s = dual.lam[coeffs.fl].sum() + (dual.mu if coeffs.sl.any() else 0.0)
    if abs(1.0 - s) <= eps4:
        return max(round_delays(coeffs, xi_star))
    lb, ub = tau_bounds(coeffs, dataset_sizes)
    return ub if s > 1.0 else lb


def subgradients(coeffs: DelayCoefficients, xi_star, tau: float) -> tuple[np.ndarray, float]:
    """Constraint violations at ``(xi*, tau*)``: per-FL-device and summed-SL."""
    t = device_delays(coeffs, xi_star)
    delta_f = np.where(coeffs.fl, t - tau, 0.0)
    delta_s = float(t[coeffs.sl].sum() - tau) if coeffs.sl.any() else 0.0
    return delta_f, delta_s


def subgradient_step(dual: DualState, delta_f, delta_s: float, alpha: float, beta: float) -> DualState:
    """Plain projected step onto the nonnegative orthant."""
    lam = np.maximum(0.0, dual.lam + alpha * np.asarray(delta_f))
    mu = max(0.0, dual.mu + beta * delta_s)
    return DualState(lam, mu, dual.j + 1)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum w = 1}``."""
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u - css / np.arange(1, n + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def dual_value(dual: DualState, coeffs: DelayCoefficients, dataset_sizes, rho2: float, gamma2: float = 0.0) -> float:
    """Lagrangian dual function at ``(lam, mu)``."""
    xi = batch_for_dual(dual, coeffs, dataset_sizes, rho2)
    t = device_delays(coeffs, xi)
    s = dual.lam[coeffs.fl].sum() + (dual.mu if coeffs.sl.any() else 0.0)
    weighted = float(np.dot(dual.lam[coeffs.fl], t[coeffs.fl]))
    if coeffs.sl.any():
        weighted += dual.mu * float(t[coeffs.sl].sum())
    if s == 1.0:
        tau_term = 0.0
    else:
        lb, ub = tau_bounds(coeffs, dataset_sizes)
        tau_term = (lb if s < 1.0 else ub) * (1.0 - s)
    return tau_term + float(np.sum(rho2 / xi)) + weighted + gamma2


def initial_dual(coeffs: DelayCoefficients) -> DualState:
    n_f = int(coeffs.fl.sum())
    has_sl = bool(coeffs.sl.any())
    lam = np.zeros(len(coeffs.gamma))
    if n_f:
        lam[coeffs.fl] = (0.5 if has_sl else 1.0) / n_f
    mu = (0.5 if n_f else 1.0) if has_sl else 0.0
    return DualState(lam, mu, 1)


def dual_ascent(
    coeffs: DelayCoefficients,
    dataset_sizes,
    rho2: float,
    gamma2: float = 0.0,
    eps4: float = DEFAULT_EPS4,
    gap_tol: float = 1e-6,
    step0: float | None = None,
    max_iters: int = 5000,
    record_trace: bool = False,
    polyak: bool = True,
) -> BatchSolution:
    """Projected subgradient ascent on the dual with steps ``step0 / j``.

    Every step is projected onto ``{lam, mu >= 0, sum lam + mu = 1}``, the set
    on which the optimality condition holds, so the KKT residual stays below
    ``eps4``. Convergence is declared once the duality gap relative to the
    primal delay-plus-batch cost drops below ``gap_tol``. With ``polyak`` the
    step is enlarged to the Polyak length whenever that exceeds ``step0 / j``,
    which keeps progress when the constraint violations are tiny.
    """
    if rho2 <= 0:
        raise ValueError("rho2 must be positive")
    d = np.asarray(dataset_sizes, dtype=float)
    fl, sl = coeffs.fl, coeffs.sl
    idx_f = np.flatnonzero(fl)
    has_sl = bool(sl.any())
    if step0 is None:
        step0 = 1.0 / (len(coeffs.gamma) * float(coeffs.gamma.max()))
    dual = initial_dual(coeffs)
    trace = []
    best = None
    converged = False
    j = 0
    for j in range(1, max_iters + 1):
        dual.j = j
        xi = batch_for_dual(dual, coeffs, d, rho2)
        tau = tau_star(dual, coeffs, d, xi, eps4)
        t = device_delays(coeffs, xi)
        batch_cost = float(np.sum(rho2 / xi))
        t_fl = float(t[fl].max()) if idx_f.size else 0.0
        t_sl = float(t[sl].sum()) if has_sl else 0.0
        primal = max(t_fl, t_sl) + batch_cost
        weighted = float(np.dot(dual.lam[fl], t[fl])) + (dual.mu * t_sl if has_sl else 0.0)
        gap = primal - (weighted + batch_cost)
        residual = dual.residual(coeffs)
        if record_trace:
            trace.append((j, dual.lam[fl].copy(), dual.mu, residual, primal + gamma2))
        if best is None or primal < best[0]:
            best = (primal, xi, tau, DualState(dual.lam.copy(), dual.mu, j), gap, residual)
        if residual <= eps4 and gap <= gap_tol * primal:
            converged = True
            break
        delta_f, delta_s = subgradients(coeffs, xi, tau)
        step = step0 / j
        if polyak:
            # the best primal value bounds the dual optimum from above
            norm2 = float(np.dot(delta_f[idx_f], delta_f[idx_f])) + delta_s * delta_s
            if norm2 > 0:
                step = max(step, (best[0] - weighted - batch_cost) / norm2)
        v = np.concatenate([dual.lam[idx_f] + step * delta_f[idx_f], [dual.mu + step * delta_s] if has_sl else []])
        w = project_simplex(v)
        lam = np.zeros_like(dual.lam)
        lam[idx_f] = w[: idx_f.size]
        dual = DualState(lam, float(w[-1]) if has_sl else 0.0, j + 1)

    if converged:
        return BatchSolution(xi, tau, primal + gamma2, True, j, residual, gap, dual, trace=trace)
    primal, xi, tau, bdual, gap, residual = best
    return BatchSolution(xi, max(round_delays(coeffs, xi)), primal + gamma2, False, j, residual, gap, bdual, trace=trace)


def round_batch_sizes(xi_star, tau_star_value: float, coeffs: DelayCoefficients, dataset_sizes) -> tuple[np.ndarray, float]:
    """Floor every batch, then add samples to the smallest SL batch while the SL delay is below ``tau*``.

    Returns the integer batches and the overshoot of the SL delay past ``tau*``.
    """
    d = np.asarray(dataset_sizes, dtype=np.int64)
    xi = np.maximum(1, np.floor(np.asarray(xi_star, dtype=float) + 1e-9)).astype(np.int64)
    xi = np.minimum(xi, d)
    sl_idx = np.flatnonzero(coeffs.sl)
    if sl_idx.size == 0:
        return xi, 0.0
    g = coeffs.gamma[sl_idx]
    t_sl = float(np.sum(xi[sl_idx] * g + coeffs.lam[sl_idx]))
    while t_sl < tau_star_value:
        room = xi[sl_idx] < d[sl_idx]
        if not room.any():
            break
        cand = np.where(room, xi[sl_idx], np.iinfo(np.int64).max)
        pos = int(np.argmin(cand))  # first minimum = smallest device id
        xi[sl_idx[pos]] += 1
        t_sl += g[pos]
    return xi, max(0.0, t_sl - tau_star_value)
