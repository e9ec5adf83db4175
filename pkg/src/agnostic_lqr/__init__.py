"""Agnostic control of a scalar linear-quadratic system with unknown drift."""
from .classical_lqr import optimal_gain, riccati_ode, riccati_p_closed, s_opt_closed
from .montecarlo import CostEstimate, RegretRecord, epoch_statistics, estimate_cost, regret_sweep
from .ou_engine import SimGrid, SystemParams, Trajectory, exact_ou_step, simulate_path, simulate_paths, variance_xtb
from .strategy import (
    ConstantGain, EpochState, SigmaOpt, SigmaStar, StrategyConstants, ZeroPolicy, parse_policy,
    sigma_star_gain, sigma_star_observe,
)

__version__ = "0.1.0"
