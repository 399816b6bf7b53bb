"""Scheduling and simulation for hybrid split/federated learning over a wireless cell."""

from .batch_opt import BatchSolution, DualState, dual_ascent, round_batch_sizes, tau_bounds, tau_star
from .channel import ChannelDraw, Scenario, SystemConstants, draw_round_channels, link_rate, make_scenario, path_loss_db
from .delay import Assignment, DelayCoefficients, RoundDelays, RoundEnv, delay_coefficients, round_delay
from .mode_select import ModeObjective, exhaustive_mode_search, gibbs_mode_selection
from .model_profile import LayerProfile, ModelProfile, build_paper_cnn_profile
from .orchestrator import Hyperweights, RoundSolution, Tolerances, bcd_solve, rho2_from_index, run_schedule, sweep_weights
from .resource_alloc import AllocationResult, fl_bandwidth_allocation, optimal_cut_layer, sl_bandwidth_split

__all__ = [
    "AllocationResult",
    "Assignment",
    "BatchSolution",
    "ChannelDraw",
    "DelayCoefficients",
    "DualState",
    "Hyperweights",
    "LayerProfile",
    "ModeObjective",
    "ModelProfile",
    "RoundDelays",
    "RoundEnv",
    "RoundSolution",
    "Scenario",
    "SystemConstants",
    "Tolerances",
    "bcd_solve",
    "build_paper_cnn_profile",
    "delay_coefficients",
    "draw_round_channels",
    "dual_ascent",
    "exhaustive_mode_search",
    "fl_bandwidth_allocation",
    "gibbs_mode_selection",
    "link_rate",
    "make_scenario",
    "optimal_cut_layer",
    "path_loss_db",
    "rho2_from_index",
    "round_batch_sizes",
    "round_delay",
    "run_schedule",
    "sl_bandwidth_split",
    "sweep_weights",
    "tau_bounds",
    "tau_star",
]
