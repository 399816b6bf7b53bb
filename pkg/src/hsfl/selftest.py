"""Small oracle checks runnable from the command line."""

from __future__ import annotations

import itertools
import time

import numpy as np

from .batch_opt import dual_ascent
from .channel import broadcast_rate, draw_round_channels, make_scenario
from .delay import RoundEnv, delay_coefficients
from .mode_select import ModeObjective, exhaustive_mode_search, gibbs_mode_selection
from .model_profile import build_paper_cnn_profile
from .resource_alloc import fl_bandwidth_allocation, optimal_cuts, sl_bandwidth_split
from .trainer import ToyModel


def _env(seed, k, d_range=(800, 2500)):
    rng = np.random.default_rng(seed)
    d = rng.integers(d_range[0], d_range[1], size=k)
    sc = make_scenario(d, rng)
    return RoundEnv(sc, draw_round_channels(sc, rng), build_paper_cnn_profile())


def fl_grid_delay(env, fractions, batches) -> np.ndarray:
    """Max FL delay for each row of candidate bandwidth fractions (all devices FL)."""
    p, c = env.profile, env.constants
    k = env.num_devices
    dl = p.total_bits / broadcast_rate(c, env.draw, np.ones(k, dtype=bool))
    train = np.asarray(batches, dtype=float) * p.total_flops_per_sample / c.device_flops
    up = np.stack([p.total_bits / env.uplink_rate(fractions[:, j], j) for j in range(k)], axis=1)
    return (dl + train + up).max(axis=1)


def check_fl_bandwidth(seeds=range(5), grid=400) -> tuple[bool, str]:
    """Equal-delay split vs a simplex grid for three FL devices."""
    worst = 0.0
    for s in seeds:
        env = _env(s, 3)
        xi = np.full(3, 32.0)
        _, t_fl, _ = fl_bandwidth_allocation(env, np.ones(3, dtype=bool), 0.0, xi)
        g = np.arange(1, grid) / grid
        b1, b2 = np.meshgrid(g, g, indexing="ij")
        ok = b1 + b2 < 1
        cand = np.stack([b1[ok], b2[ok], 1.0 - b1[ok] - b2[ok]], axis=1)
        best = fl_grid_delay(env, cand, xi).min()
        worst = max(worst, (t_fl - best) / best)
    return worst <= 5e-3, f"worst relative excess {worst:.2e}"


def check_sl_split(seeds=range(3), grid=200) -> tuple[bool, str]:
    worst = 0.0
    for s in seeds:
        env = _env(s, 4)
        sl = np.array([True, True, False, False])
        xi = np.full(4, 32.0)
        res = sl_bandwidth_split(env, sl, xi)
        best = np.inf
        for b0 in np.arange(1, grid) / grid:
            _, t_sl = optimal_cuts(env, sl, b0, xi)
            _, t_fl, _ = fl_bandwidth_allocation(env, ~sl, b0, xi)
            best = min(best, max(t_sl, t_fl))
        worst = max(worst, (res.t_round - best) / best)
    return worst <= 1e-2, f"worst relative excess {worst:.2e}"


def check_dual_ascent(seeds=range(5)) -> tuple[bool, str]:
    worst = 0.0
    for s in seeds:
        env = _env(s, 4, (10, 30))
        sl = np.array([False, False, True, True])
        xi = np.minimum(env.dataset_sizes, 32).astype(float)
        alloc = sl_bandwidth_split(env, sl, xi)
        coeffs = delay_coefficients(alloc.assignment(sl, xi), env)
        rho2 = 500.0
        sol = dual_ascent(coeffs, env.dataset_sizes, rho2)
        grids = [np.arange(1, d + 1, dtype=float) for d in env.dataset_sizes]
        best = np.inf
        for combo in itertools.product(*grids[:2]):
            rest = np.stack(np.meshgrid(*grids[2:], indexing="ij"), -1).reshape(-1, 2)
            t_fl = max(combo[0] * coeffs.gamma[0] + coeffs.lam[0], combo[1] * coeffs.gamma[1] + coeffs.lam[1])
            t_sl = (rest * coeffs.gamma[2:] + coeffs.lam[2:]).sum(1)
            u = np.maximum(t_fl, t_sl) + rho2 / combo[0] + rho2 / combo[1] + (rho2 / rest).sum(1)
            best = min(best, u.min())
        worst = max(worst, (sol.u2 - best) / best)
    return worst <= 5e-3, f"worst relative excess over integer grid {worst:.2e}"


def check_gibbs(seeds=range(5), k=6) -> tuple[bool, str]:
    hits = 0
    for s in seeds:
        env = _env(s, k)
        xi = np.full(k, 32.0)
        obj = ModeObjective(env, xi, 3.0, float(np.sum(500.0 / xi)))
        ex = exhaustive_mode_search(obj)
        g = gibbs_mode_selection(np.random.default_rng(s).random(k) < 0.5, obj, np.random.default_rng(s))
        hits += g.u1 <= ex.u1 + 1e-12
    return hits == len(seeds), f"{hits}/{len(seeds)} seeds reach the exhaustive optimum"


def check_gradient(points=10) -> tuple[bool, str]:
    model = ToyModel()
    rng = np.random.default_rng(0)
    x = rng.normal(size=(16, model.widths[0]))
    y = rng.integers(0, model.widths[-1], size=16)
    worst = 0.0
    for _ in range(points):
        p = model.init_params(rng)
        v = rng.normal(size=p.size)
        v /= np.linalg.norm(v)
        _, g = model.loss_and_grad(p, x, y)
        h = 1e-5
        fd = (model.loss(p + h * v, x, y) - model.loss(p - h * v, x, y)) / (2 * h)
        worst = max(worst, abs(fd - g @ v) / max(abs(fd), 1e-12))
    return worst <= 1e-5, f"worst relative error {worst:.2e}"


CHECKS = {
    "fl_bandwidth_vs_grid": check_fl_bandwidth,
    "sl_split_vs_sweep": check_sl_split,
    "dual_ascent_vs_grid": check_dual_ascent,
    "gibbs_vs_exhaustive": check_gibbs,
    "gradient_vs_finite_difference": check_gradient,
}


def run_selftest(emit=print) -> bool:
    all_ok = True
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        ok, detail = fn()
        all_ok &= ok
        emit(f"{'PASS' if ok else 'FAIL'} {name}: {detail} ({time.perf_counter() - t0:.1f}s)")
    return all_ok
