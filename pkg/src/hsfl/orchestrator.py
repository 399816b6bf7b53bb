"""Per-round joint optimisation by block coordinate descent, plus multi-round schedules.

One round alternates two blocks until the objective stalls: modes with cuts
and bandwidths for fixed batches, then batches for fixed modes. Integer
batches come from rounding the relaxed optimum, which also yields the
lower/upper bounds reported with each solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .batch_opt import DEFAULT_EPS4, BatchSolution, dual_ascent, round_batch_sizes, u2_value
from .channel import Scenario, draw_round_channels
from .delay import Assignment, RoundEnv, delay_coefficients, round_delay
from .mode_select import DEFAULT_DELTA, ModeObjective, gibbs_mode_selection, sl_penalty
from .model_profile import ModelProfile
from .resource_alloc import DEFAULT_EPS2, DEFAULT_EPS3, AllocationResult, sl_bandwidth_split

DEFAULT_EPS1 = 1e-5
SCHEMES = ("proposed", "SL", "FL", "vanilla", "BSO", "LMS")
TRACE_COLUMNS = (
    "round",
    "scheme",
    "t_fl",
    "t_sl",
    "t_round",
    "K_S",
    "total_batch",
    "u",
    "u_lb",
    "u_ub",
    "cumulative_delay",
    "loss",
)


def rho2_from_index(i: int) -> float:
    """Batch weight on the 5/2 alternating decade grid: 3 -> 50, 4 -> 200, ..., 9 -> 50000."""
    if isinstance(i, bool) or int(i) != i or not 3 <= i <= 9:
        raise ValueError(f"rho2 index must be an integer in 3..9, got {i!r}")
    i = int(i)
    return float(5 * 10 ** ((i - 1) // 2)) if i % 2 else float(2 * 10 ** (i // 2))


@dataclass(frozen=True)
class Hyperweights:
    rho1: float
    rho2: float
    rho2_index: int | None = None

    def __post_init__(self):
        if self.rho1 <= 0 or self.rho2 <= 0:
            raise ValueError("rho1 and rho2 must be positive")
        if self.rho2_index is not None and rho2_from_index(self.rho2_index) != self.rho2:
            raise ValueError("rho2 disagrees with rho2_index")

    @classmethod
    def from_index(cls, rho1: float, index: int) -> "Hyperweights":
        return cls(rho1, rho2_from_index(index), index)


@dataclass(frozen=True)
class Tolerances:
    eps1: float = DEFAULT_EPS1
    eps2: float = DEFAULT_EPS2
    eps3: float = DEFAULT_EPS3
    eps4: float = DEFAULT_EPS4
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        for name in ("eps1", "eps2", "eps3", "eps4", "delta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def objective_u(t_round: float, num_sl: int, batches, rho1: float, rho2: float) -> float:
    """Round delay minus the SL-count bonus plus the batch-size penalty."""
    return t_round + sl_penalty(num_sl, rho1) + float(np.sum(rho2 / np.asarray(batches, dtype=float)))


def objective_parts(t_round: float, num_sl: int, batches, rho1: float, rho2: float) -> dict:
    """``u`` with both block views: ``u1`` holds batches fixed, ``u2`` holds modes fixed."""
    gamma1 = float(np.sum(rho2 / np.asarray(batches, dtype=float)))
    gamma2 = sl_penalty(num_sl, rho1)
    return {
        "u": t_round + gamma2 + gamma1,
        "u1": t_round + gamma2 + gamma1,
        "u2": t_round + gamma1 + gamma2,
        "t_round": t_round,
        "gamma1": gamma1,
        "gamma2": gamma2,
    }


@dataclass
class RoundSolution:
    sl: np.ndarray
    allocation: AllocationResult
    batches: np.ndarray
    u: float
    u_lb: float
    u_ub: float
    bcd_iterations: int
    objective_trace: list = field(default_factory=list)
    relaxed_batches: np.ndarray | None = None
    batch_solution: BatchSolution | None = None
    overshoot: float = 0.0
    converged: bool = True

    @property
    def assignment(self) -> Assignment:
        return self.allocation.assignment(self.sl, self.batches)

    @property
    def num_sl(self) -> int:
        return int(self.sl.sum())

    def to_dict(self) -> dict:
        a = self.allocation
        return {
            "modes": ["SL" if s else "FL" for s in self.sl],
            "cuts": a.cuts.tolist(),
            "bandwidth": a.bandwidth.tolist(),
            "b0": a.b0,
            "batches": self.batches.tolist(),
            "t_fl": a.t_fl,
            "t_sl": a.t_sl,
            "t_round": a.t_round,
            "K_S": self.num_sl,
            "u": self.u,
            "u_lb": self.u_lb,
            "u_ub": self.u_ub,
            "bcd_iterations": self.bcd_iterations,
            "objective_trace": list(self.objective_trace),
            "converged": self.converged,
        }


def _mode_block(env, sl, batches, weights, tol, rng, gibbs_kwargs):
    objective = ModeObjective(env, batches, weights.rho1, float(np.sum(weights.rho2 / batches)), tol.eps2, tol.eps3)
    return gibbs_mode_selection(sl, objective, rng, tol.delta, **gibbs_kwargs)


def _batch_block(env, sl, alloc, batches, weights, tol):
    coeffs = delay_coefficients(alloc.assignment(sl, batches), env)
    sol = dual_ascent(coeffs, env.dataset_sizes, weights.rho2, sl_penalty(int(sl.sum()), weights.rho1), tol.eps4)
    return coeffs, sol


def bcd_solve(
    env: RoundEnv,
    weights: Hyperweights,
    rng: np.random.Generator,
    tol: Tolerances = Tolerances(),
    max_alternations: int = 50,
    initial_batch: int = 32,
    gibbs_kwargs: dict | None = None,
) -> RoundSolution:
    """Alternate mode and batch blocks, then round batches to integers.

    Each block result replaces the incumbent only when it does not raise the
    objective, so the recorded trace is nonincreasing. After rounding, the
    modes are re-optimised for the integer batches; if that beats the relaxed
    value the alternation resumes from there.
    """
    gibbs_kwargs = gibbs_kwargs or {}
    d = env.dataset_sizes.astype(float)
    k = env.num_devices
    sl = rng.random(k) < 0.5
    xi = np.minimum(float(initial_batch), d)
    alloc = sl_bandwidth_split(env, sl, xi, tol.eps2, tol.eps3)
    u = objective_u(alloc.t_round, int(sl.sum()), xi, weights.rho1, weights.rho2)
    trace = [u]
    converged = False
    bsol = None
    it = 0
    while it < max_alternations:
        it += 1
        res = _mode_block(env, sl, xi, weights, tol, rng, gibbs_kwargs)
        if res.u1 <= u:
            sl, alloc, u = res.sl, res.allocation, res.u1
        coeffs, cand = _batch_block(env, sl, alloc, xi, weights, tol)
        if cand.u2 <= u:
            xi, u, bsol = cand.xi, cand.u2, cand
        trace.append(u)
        if trace[-2] - u > tol.eps1:
            continue

        # relaxed solution reached: bound it and round
        u_lb = u
        tau = max(_delays(coeffs, xi))
        floored = np.maximum(1, np.floor(xi + 1e-9)).astype(np.int64)
        u_ub = u2_value(coeffs, floored, weights.rho2, sl_penalty(int(sl.sum()), weights.rho1))
        rounded, overshoot = round_batch_sizes(xi, tau, coeffs, d)
        u_round = u2_value(coeffs, rounded, weights.rho2, sl_penalty(int(sl.sum()), weights.rho1))
        best = (u_round, sl, alloc, rounded) if u_round <= u_ub else (u_ub, sl, alloc, floored)
        res = _mode_block(env, sl, best[3].astype(float), weights, tol, rng, gibbs_kwargs)
        if res.u1 < best[0]:
            best = (res.u1, res.sl, res.allocation, best[3])
        if best[0] < u_lb - tol.eps1 and it < max_alternations:
            # the integer point beats the relaxed one: keep descending from it
            u, sl, alloc, xi = best[0], best[1], best[2], best[3].astype(float)
            trace.append(u)
            bsol = None
            continue
        converged = True
        final_u, sl, alloc, batches = best
        return RoundSolution(
            sl=sl,
            allocation=alloc,
            batches=batches.astype(np.int64),
            u=final_u,
            u_lb=u_lb,
            u_ub=u_ub,
            bcd_iterations=it,
            objective_trace=trace,
            relaxed_batches=xi,
            batch_solution=bsol,
            overshoot=overshoot,
            converged=converged,
        )

    # alternation budget exhausted: floor what we have
    batches = np.maximum(1, np.floor(xi + 1e-9)).astype(np.int64)
    alloc = sl_bandwidth_split(env, sl, batches, tol.eps2, tol.eps3)
    u_final = objective_u(alloc.t_round, int(sl.sum()), batches, weights.rho1, weights.rho2)
    return RoundSolution(sl, alloc, batches, u_final, u, u_final, it, trace, xi, bsol, 0.0, False)


def _delays(coeffs, xi):
    t = coeffs.gamma * xi + coeffs.lam
    return (t[coeffs.fl].max() if coeffs.fl.any() else 0.0, t[coeffs.sl].sum() if coeffs.sl.any() else 0.0)


def check_feasibility(sol_or_assignment, env: RoundEnv, eps2: float = DEFAULT_EPS2, tol: float = 1e-9) -> list[str]:
    """Independent audit of the round constraints; returns the list of violations."""
    a = sol_or_assignment.assignment if isinstance(sol_or_assignment, RoundSolution) else sol_or_assignment
    problems = []
    k = env.num_devices
    L = env.profile.num_layers
    d = env.dataset_sizes
    if a.sl.shape != (k,):
        problems.append("mode vector has wrong length")
    sl, fl = a.sl, ~a.sl
    if np.any((a.cuts[sl] < 1) | (a.cuts[sl] > L)):
        problems.append("cut layer outside 1..L")
    if a.b0 < -tol or a.b0 > 1 + tol:
        problems.append("b0 outside [0, 1]")
    if np.any(a.bandwidth < -tol) or np.any(a.bandwidth > 1 + tol):
        problems.append("bandwidth share outside [0, 1]")
    if a.bandwidth[fl].sum() + a.b0 > 1 + tol:
        problems.append("bandwidth shares exceed the total")
    if fl.any() and a.bandwidth[fl].sum() + a.b0 < 1 - eps2 - tol:
        problems.append("bandwidth left unused beyond the tolerance band")
    if sl.any() and a.b0 <= 0:
        problems.append("SL devices without bandwidth")
    if np.any(a.bandwidth[fl] <= 0):
        problems.append("FL device without bandwidth")
    if np.any(a.batches < 1) or np.any(a.batches > d):
        problems.append("batch outside [1, D_k]")
    if np.any(a.batches != np.round(a.batches)):
        problems.append("non-integer batch")
    return problems


# ---------------------------------------------------------------- schedules


def channel_rng(seed: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, round_index, 0])


def decision_rng(seed: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, round_index, 1])


@dataclass
class SchemeRound:
    assignment: Assignment
    u: float
    u_lb: float = float("nan")
    u_ub: float = float("nan")


def _random_cuts(sl, rng, num_layers):
    cuts = np.zeros(len(sl), dtype=np.int64)
    cuts[sl] = rng.integers(1, num_layers + 1, size=int(sl.sum()))
    return cuts


def _equal_split(sl, k):
    bw = np.where(sl, 0.0, 1.0 / k)
    return bw, float(sl.sum()) / k


def _score(assignment, env, weights):
    delays = round_delay(assignment, env)
    return delays, objective_u(delays.t_round, assignment.num_sl, assignment.batches, weights.rho1, weights.rho2)


def scheme_round(scheme: str, env: RoundEnv, weights: Hyperweights, rng, tol: Tolerances = Tolerances(), gibbs_kwargs=None):
    """Decisions of one scheme for one round."""
    k = env.num_devices
    full = env.dataset_sizes.astype(np.int64)
    L = env.profile.num_layers
    if scheme == "proposed":
        sol = bcd_solve(env, weights, rng, tol, gibbs_kwargs=gibbs_kwargs)
        return SchemeRound(sol.assignment, sol.u, sol.u_lb, sol.u_ub)
    if scheme == "FL":
        sl = np.zeros(k, dtype=bool)
        a = Assignment(sl, np.zeros(k, dtype=np.int64), np.full(k, 1.0 / k), 0.0, full)
    elif scheme == "SL":
        sl = np.ones(k, dtype=bool)
        a = Assignment(sl, _random_cuts(sl, rng, L), np.zeros(k), 1.0, full)
    elif scheme in ("vanilla", "BSO"):
        sl = rng.random(k) < 0.5
        bw, b0 = _equal_split(sl, k)
        a = Assignment(sl, _random_cuts(sl, rng, L), bw, b0, full)
        if scheme == "BSO":
            coeffs = delay_coefficients(a, env)
            bsol = dual_ascent(coeffs, full, weights.rho2, sl_penalty(a.num_sl, weights.rho1), tol.eps4)
            tau = max(_delays(coeffs, bsol.xi))
            batches, _ = round_batch_sizes(bsol.xi, tau, coeffs, full)
            a = a.copy(batches=batches)
    elif scheme == "LMS":
        init = rng.random(k) < 0.5
        res = gibbs_mode_selection(
            init,
            ModeObjective(env, full, weights.rho1, float(np.sum(weights.rho2 / full)), tol.eps2, tol.eps3),
            rng,
            tol.delta,
            **(gibbs_kwargs or {}),
        )
        a = res.allocation.assignment(res.sl, full)
    else:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    _, u = _score(a, env, weights)
    return SchemeRound(a, u)


@dataclass
class ScheduleResult:
    scheme: str
    rows: list
    channels: list
    rounds_to_target: int | None = None

    @property
    def cumulative_delay(self) -> float:
        return self.rows[-1]["cumulative_delay"] if self.rows else 0.0


def run_schedule(
    scenario: Scenario,
    profile: ModelProfile,
    weights: Hyperweights,
    rounds: int,
    scheme: str,
    seed: int,
    trainer=None,
    target_loss: float | None = None,
    tol: Tolerances = Tolerances(),
    fading: bool = True,
    gibbs_kwargs: dict | None = None,
) -> ScheduleResult:
    """Simulate ``rounds`` rounds of one scheme.

    Channels come from a stream keyed by (seed, round) that every scheme
    shares. With a trainer attached, each round's modes and batches drive a
    training step and the run stops once the held-out loss reaches
    ``target_loss``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    rows, channels = [], []
    total = 0.0
    hit = None
    for t in range(rounds):
        draw = draw_round_channels(scenario, channel_rng(seed, t), fading)
        env = RoundEnv(scenario, draw, profile)
        dec = scheme_round(scheme, env, weights, decision_rng(seed, t), tol, gibbs_kwargs)
        delays = round_delay(dec.assignment, env)
        total += delays.t_round
        loss = float("nan")
        if trainer is not None:
            loss = trainer.step(dec.assignment.sl, dec.assignment.batches.astype(np.int64))
        rows.append(
            {
                "round": t,
                "scheme": scheme,
                "t_fl": delays.t_fl,
                "t_sl": delays.t_sl,
                "t_round": delays.t_round,
                "K_S": dec.assignment.num_sl,
                "total_batch": int(dec.assignment.batches.sum()),
                "u": dec.u,
                "u_lb": dec.u_lb,
                "u_ub": dec.u_ub,
                "cumulative_delay": total,
                "loss": loss,
            }
        )
        channels.append((t, draw))
        if target_loss is not None and loss <= target_loss:
            hit = t + 1
            break
    return ScheduleResult(scheme, rows, channels, hit)


def sweep_weights(
    scenario: Scenario,
    profile: ModelProfile,
    rho1_values,
    rho2_indices,
    rounds: int,
    seed: int,
    trainer_factory=None,
    target_loss: float | None = None,
    tol: Tolerances = Tolerances(),
    gibbs_kwargs: dict | None = None,
) -> list[dict]:
    """One proposed-scheme schedule per (rho1, rho2 index) cell."""
    rho1_values, rho2_indices = list(rho1_values), list(rho2_indices)
    if not rho1_values or not rho2_indices:
        raise ValueError("weight grids must be nonempty")
    table = []
    for rho1 in rho1_values:
        for idx in rho2_indices:
            w = Hyperweights.from_index(rho1, idx)
            trainer = trainer_factory() if trainer_factory else None
            res = run_schedule(scenario, profile, w, rounds, "proposed", seed, trainer, target_loss, tol, gibbs_kwargs=gibbs_kwargs)
            table.append(
                {
                    "rho1": rho1,
                    "rho2_index": idx,
                    "rho2": w.rho2,
                    "rounds": len(res.rows),
                    "rounds_to_target": res.rounds_to_target,
                    "cumulative_delay": res.cumulative_delay,
                    "mean_K_S": float(np.mean([r["K_S"] for r in res.rows])),
                    "mean_total_batch": float(np.mean([r["total_batch"] for r in res.rows])),
                    "mean_t_round": float(np.mean([r["t_round"] for r in res.rows])),
                }
            )
    return table
