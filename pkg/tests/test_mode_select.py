import math

import numpy as np
import pytest
from conftest import make_env

from hsfl.mode_select import (
    DEFAULT_DELTA,
    ModeObjective,
    evaluate_mode,
    exhaustive_mode_search,
    gibbs_accept_probability,
    gibbs_mode_selection,
    sl_penalty,
)
from hsfl.resource_alloc import sl_bandwidth_split


def test_acceptance_probability_values():
    assert gibbs_accept_probability(1.0, 1.0, DEFAULT_DELTA) == 0.5
    # a drop of delta * ln 9 is accepted with probability 0.9
    drop = DEFAULT_DELTA * math.log(9.0)
    assert gibbs_accept_probability(1.0, 1.0 - drop, DEFAULT_DELTA) == pytest.approx(0.9, abs=1e-12)
    assert gibbs_accept_probability(1.0, 1.0 + drop, DEFAULT_DELTA) == pytest.approx(0.1, abs=1e-12)


@pytest.mark.parametrize("gap", [-1e-3, -1e-6, 1e-6, 1e-3])
def test_acceptance_probability_open_interval(gap):
    p = gibbs_accept_probability(1.0, 1.0 + gap, DEFAULT_DELTA)
    assert 0.0 < p < 1.0


def test_acceptance_probability_rejects_bad_delta():
    with pytest.raises(ValueError):
        gibbs_accept_probability(1.0, 0.0, 0.0)


def test_tiny_delta_never_accepts_worse():
    class Ladder:
        """Toy objective: cost equals the number of SL devices."""

        env = None

        def __init__(self):
            self.evaluations = 0

        def __call__(self, sl):
            self.evaluations += 1
            return float(np.sum(sl)), None

    res = gibbs_mode_selection(np.zeros(6, dtype=bool), Ladder(), np.random.default_rng(0), delta=1e-12, record_chain=True)
    assert res.u1 == 0.0
    for _, _, u, u_c, accepted in res.chain:
        assert not (accepted and u_c > u)


def test_objective_identity_and_memoisation():
    env = make_env(0, 5)
    xi = np.full(5, 32.0)
    obj = ModeObjective(env, xi, rho1=2.0, gamma1=7.0)
    sl = np.array([True, False, True, True, False])
    u, alloc = obj(sl)
    direct = sl_bandwidth_split(env, sl, xi)
    assert u == pytest.approx(direct.t_round - 2.0 * 3 * 2 + 7.0, rel=1e-12)
    assert evaluate_mode(sl, xi, env, 2.0, 7.0)[0] == u
    obj(sl)
    assert obj.evaluations == 1
    assert sl_penalty(0, 5.0) == 0.0 and sl_penalty(1, 5.0) == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_gibbs_reaches_exhaustive_on_small_cells(seed):
    env = make_env(seed, 5)
    xi = np.full(5, 32.0)
    obj = ModeObjective(env, xi, 3.0, float(np.sum(500 / xi)))
    ex = exhaustive_mode_search(obj)
    res = gibbs_mode_selection(np.zeros(5, dtype=bool), obj, np.random.default_rng(seed))
    assert res.u1 == pytest.approx(ex.u1, rel=1e-12)
    assert np.all(np.diff(res.best_trace) <= 0)


def test_gibbs_limits():
    env = make_env(0, 4)
    obj = ModeObjective(env, np.full(4, 8.0), 1.0, 0.0)
    res = gibbs_mode_selection(np.ones(4, dtype=bool), obj, np.random.default_rng(0), stall_limit=3, max_iters=5)
    assert res.iterations <= 5
    with pytest.raises(ValueError):
        gibbs_mode_selection(np.ones(4, dtype=bool), obj, np.random.default_rng(0), stall_limit=0)


def test_exhaustive_refuses_large_cells():
    env = make_env(0, 17, d_range=(10, 20))
    with pytest.raises(ValueError):
        exhaustive_mode_search(ModeObjective(env, np.ones(17), 1.0, 0.0))
