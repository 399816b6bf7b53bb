"""Learning-mode selection over binary FL/SL vectors."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .delay import RoundEnv
from .resource_alloc import DEFAULT_EPS2, DEFAULT_EPS3, AllocationResult, sl_bandwidth_split

DEFAULT_DELTA = 7.5e-4
MAX_EXHAUSTIVE_DEVICES = 16


def sl_penalty(num_sl: int, rho1: float) -> float:
    return -rho1 * num_sl * (num_sl - 1)


class ModeObjective:
    """Evaluates ``u1 = T - rho1 K_S (K_S - 1) + Gamma1`` for mode vectors with batches held fixed.

    Results are memoised per mode vector; evaluation is deterministic so the
    cache never changes outcomes.
    """

    def __init__(self, env: RoundEnv, batches, rho1: float, gamma1: float, eps2=DEFAULT_EPS2, eps3=DEFAULT_EPS3):
        self.env = env
        self.batches = np.asarray(batches, dtype=float)
        self.rho1 = rho1
        self.gamma1 = gamma1
        self.eps2 = eps2
        self.eps3 = eps3
        self._cache: dict[bytes, tuple[float, AllocationResult]] = {}

    @property
    def evaluations(self) -> int:
        return len(self._cache)

    def __call__(self, sl) -> tuple[float, AllocationResult]:
        sl = np.asarray(sl, dtype=bool)
        key = np.packbits(sl).tobytes() + bytes([len(sl) % 8])
        hit = self._cache.get(key)
        if hit is None:
            alloc = sl_bandwidth_split(self.env, sl, self.batches, self.eps2, self.eps3)
            u1 = alloc.t_round + sl_penalty(int(sl.sum()), self.rho1) + self.gamma1
            hit = (u1, alloc)
            self._cache[key] = hit
        return hit


def evaluate_mode(sl, batches, env: RoundEnv, rho1: float, gamma1: float, eps2=DEFAULT_EPS2, eps3=DEFAULT_EPS3):
    """Objective of (modes | batches) after cut and bandwidth optimisation."""
    return ModeObjective(env, batches, rho1, gamma1, eps2, eps3)(sl)


def gibbs_accept_probability(u_current: float, u_candidate: float, delta: float) -> float:
    if delta <= 0:
        raise ValueError("delta must be positive")
    return float(expit(-(u_candidate - u_current) / delta))


@dataclass
class ModeSearchResult:
    sl: np.ndarray
    u1: float
    allocation: AllocationResult
    iterations: int = 0
    evaluations: int = 0
    best_trace: list = field(default_factory=list, repr=False)
    chain: list = field(default_factory=list, repr=False)


def gibbs_mode_selection(
    initial,
    objective: ModeObjective,
    rng: np.random.Generator,
    delta: float = DEFAULT_DELTA,
    stall_limit: int | None = None,
    max_iters: int | None = None,
    record_chain: bool = False,
) -> ModeSearchResult:
    """Single-flip Gibbs chain over mode vectors, returning the best state seen.

    Flipping coordinate ``k`` is the swap between the current vector and its
    complement. Stops after ``stall_limit`` proposals without a new best
    (default ``10 K``) or ``max_iters`` proposals (default ``200 K``).
    """
    x = np.array(initial, dtype=bool)
    k_dev = x.size
    stall_limit = 10 * k_dev if stall_limit is None else stall_limit
    max_iters = 200 * k_dev if max_iters is None else max_iters
    if stall_limit < 1 or max_iters < 1:
        raise ValueError("limits must be >= 1")
    u, alloc = objective(x)
    best_x, best_u, best_alloc = x.copy(), u, alloc
    best_trace = [best_u]
    chain = []
    stall = 0
    it = 0
    for it in range(1, max_iters + 1):
        k = int(rng.integers(k_dev))
        cand = x.copy()
        cand[k] = not cand[k]
        u_c, alloc_c = objective(cand)
        accept = rng.random() < gibbs_accept_probability(u, u_c, delta)
        if record_chain:
            chain.append((it, k, u, u_c, accept))
        if accept:
            x, u = cand, u_c
        if u_c < best_u:
            best_x, best_u, best_alloc = cand.copy(), u_c, alloc_c
            stall = 0
        else:
            stall += 1
        best_trace.append(best_u)
        if stall >= stall_limit:
            break
    return ModeSearchResult(best_x, best_u, best_alloc, it, objective.evaluations, best_trace, chain)


def exhaustive_mode_search(objective: ModeObjective) -> ModeSearchResult:
    """Brute force over all ``2^K`` vectors; ties keep the lexicographically first."""
    k_dev = objective.env.num_devices
    if k_dev > MAX_EXHAUSTIVE_DEVICES:
        raise ValueError(f"exhaustive search refused for K={k_dev} > {MAX_EXHAUSTIVE_DEVICES}")
    best = None
    for bits in itertools.product((False, True), repeat=k_dev):
        sl = np.array(bits, dtype=bool)
        u, alloc = objective(sl)
        if best is None or u < best.u1:
            best = ModeSearchResult(sl, u, alloc)
    best.evaluations = objective.evaluations
    return best
