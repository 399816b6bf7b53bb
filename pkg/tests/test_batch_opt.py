import numpy as np
import pytest
from conftest import make_env
from scipy.optimize import minimize

from hsfl.batch_opt import (
    DualState,
    batch_for_dual,
    clamp_batch,
    dual_ascent,
    dual_value,
    project_simplex,
    round_batch_sizes,
    stationary_batch,
    subgradient_step,
    tau_bounds,
    tau_star,
    u2_value,
)
from hsfl.delay import DelayCoefficients, delay_coefficients
from hsfl.resource_alloc import sl_bandwidth_split


def coeffs_for(seed, sl, d_range=(800, 2500)):
    env = make_env(seed, len(sl), d_range)
    sl = np.asarray(sl, dtype=bool)
    xi = np.minimum(env.dataset_sizes, 32).astype(float)
    alloc = sl_bandwidth_split(env, sl, xi)
    return env, delay_coefficients(alloc.assignment(sl, xi), env)


def test_stationary_and_clamp():
    assert stationary_batch(2.0, 2.0, 16.0) == 2.0
    assert np.isinf(stationary_batch(1.0, 0.0, 16.0))
    np.testing.assert_array_equal(clamp_batch(np.array([0.2, 5.0, np.inf]), np.array([10, 10, 10])), [1.0, 5.0, 10.0])
    with pytest.raises(ValueError):
        stationary_batch(1.0, 1.0, 0.0)


def test_tau_star_three_cases():
    c = DelayCoefficients(np.array([1.0, 2.0, 1.0]), np.array([0.5, 0.5, 0.5]), np.array([False, False, True]))
    d = np.array([10, 10, 10])
    lb, ub = tau_bounds(c, d)
    assert (lb, ub) == (2.5, 20.5)
    xi = np.array([3.0, 4.0, 5.0])
    assert tau_star(DualState(np.array([0.3, 0.3, 0.0]), 0.4), c, d, xi) == pytest.approx(8.5)
    assert tau_star(DualState(np.array([0.5, 0.5, 0.0]), 0.5), c, d, xi) == ub
    assert tau_star(DualState(np.array([0.1, 0.1, 0.0]), 0.1), c, d, xi) == lb
    with pytest.raises(ValueError):
        tau_star(DualState(np.zeros(3), 1.0), c, d, xi, eps4=0.0)


def test_larger_multiplier_gives_smaller_batch():
    # raising a device's delay price shrinks its batch
    c = DelayCoefficients(np.array([0.01, 0.01]), np.zeros(2), np.array([False, True]))
    d = np.array([10_000, 10_000])
    lo = batch_for_dual(DualState(np.array([0.2, 0.0]), 0.8), c, d, 50.0)
    hi = batch_for_dual(DualState(np.array([0.6, 0.0]), 0.4), c, d, 50.0)
    assert hi[0] < lo[0] and hi[1] > lo[1]


def test_orthant_step_and_simplex_projection():
    s = subgradient_step(DualState(np.array([0.1, 0.2]), 0.3), np.array([-1.0, 1.0]), -5.0, 0.5, 0.5)
    np.testing.assert_allclose(s.lam, [0.0, 0.7])
    assert s.mu == 0.0 and s.j == 2
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = rng.normal(size=5) * 3
        w = project_simplex(v)
        assert w.min() >= 0 and w.sum() == pytest.approx(1.0, abs=1e-12)
        # projection is the closest simplex point: no random simplex point is nearer
        for _ in range(20):
            z = rng.dirichlet(np.ones(5))
            assert np.linalg.norm(v - w) <= np.linalg.norm(v - z) + 1e-12


def test_rounding_step_through():
    c = DelayCoefficients(np.ones(3), np.zeros(3), np.ones(3, dtype=bool))
    xi, over = round_batch_sizes([4.9, 4.9, 4.9], 14.7, c, [100, 100, 100])
    # floor to 12 s, then +1 on devices 0, 1, 2 in turn until 15 s passes 14.7 s
    np.testing.assert_array_equal(xi, [5, 5, 5])
    assert over == pytest.approx(0.3)


def test_rounding_respects_dataset_limits():
    c = DelayCoefficients(np.ones(3), np.zeros(3), np.array([True, True, False]))
    xi, over = round_batch_sizes([1.5, 0.2, 7.9], 100.0, c, [3, 2, 50])
    np.testing.assert_array_equal(xi, [3, 2, 7])
    assert over == 0.0


@pytest.mark.parametrize("seed", range(6))
def test_weak_duality_and_random_feasible_points(seed):
    env, c = coeffs_for(seed, [True, False, True, False])
    d = env.dataset_sizes
    rho2 = 500.0
    sol = dual_ascent(c, d, rho2)
    assert sol.converged and sol.feasible(d)
    rng = np.random.default_rng(seed)
    for _ in range(100):
        w = rng.dirichlet(np.ones(3))
        dual = DualState(np.array([0.0, w[0], 0.0, w[1]]), w[2])
        assert dual_value(dual, c, d, rho2) <= sol.u2 + 1e-9
        xi = rng.uniform(1, d)
        assert sol.u2 <= u2_value(c, xi, rho2) + 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_matches_slsqp_on_epigraph_form(seed):
    env, c = coeffs_for(seed, [True, False, True, False, True])
    d = env.dataset_sizes.astype(float)
    rho2 = 2000.0
    sol = dual_ascent(c, d, rho2)
    fl, sl = np.flatnonzero(c.fl), np.flatnonzero(c.sl)

    def obj(z):
        return z[-1] + np.sum(rho2 / z[:-1])

    cons = [{"type": "ineq", "fun": lambda z, k=k: z[-1] - (c.gamma[k] * z[k] + c.lam[k])} for k in fl]
    cons.append({"type": "ineq", "fun": lambda z: z[-1] - np.sum(c.gamma[sl] * z[sl] + c.lam[sl])})
    x0 = np.append(np.minimum(d, 50.0), 1e3)
    bounds = [(1, dk) for dk in d] + [(0, None)]
    ref = minimize(obj, x0, method="SLSQP", bounds=bounds, constraints=cons, options={"ftol": 1e-14, "maxiter": 1000})
    assert ref.success
    assert sol.u2 == pytest.approx(ref.fun, rel=1e-6)


def test_all_fl_and_all_sl_cells():
    for sl in ([False] * 3, [True] * 3):
        env, c = coeffs_for(7, sl)
        sol = dual_ascent(c, env.dataset_sizes, 200.0)
        assert sol.converged and sol.kkt_residual <= 1e-6


def test_trace_and_argument_checks():
    env, c = coeffs_for(0, [True, False])
    sol = dual_ascent(c, env.dataset_sizes, 50.0, record_trace=True)
    assert len(sol.trace) == sol.iterations
    with pytest.raises(ValueError):
        dual_ascent(c, env.dataset_sizes, 0.0)
