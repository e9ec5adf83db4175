"""Linear feedback policies: the agnostic epoch strategy, the known-a optimum, baselines.

Every policy returns a gain ``g`` and the caller applies ``u = -g q``.  The
epoch bookkeeping (``EpochState`` / ``sigma_star_observe``) is tracked for
every policy so trajectories carry epoch labels, but only ``SigmaStar``
derives its gain from it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .classical_lqr import optimal_gain

LOG2 = math.log(2.0)

MODE_SCHEDULE = 0
MODE_SIGMA_STAR = 1


@dataclass(frozen=True)
class StrategyConstants:
    C0: float = 4.0
    C1: float = 2.0**12

    def __post_init__(self):
        if not self.C0 > 0:
            raise ValueError(f"C0 must be positive, got {self.C0}")
        if not self.C1 > 4:
            raise ValueError(f"C1 must exceed 4, got {self.C1}")


DEFAULT_CONSTANTS = StrategyConstants()


@dataclass(frozen=True)
class EpochState:
    """Controller state. ``nu == -1`` is the Prologue."""

    nu: int = -1
    t_start: float = 0.0
    a_nu: float = 0.0

    @property
    def threshold_exit(self) -> float:
        return 2.0 ** (self.nu + 1)

    @property
    def guess_a(self) -> float:
        # a_nu carries a safety factor of 4 over the drift estimate
        return self.a_nu / 4.0


def sigma_star_gain(state: EpochState) -> float:
    return 0.0 if state.nu <= 0 else 2.0 * state.a_nu


def sigma_star_observe(
    state: EpochState, t: float, q: float, consts: StrategyConstants = DEFAULT_CONSTANTS
) -> EpochState:
    """Advance at most one epoch if ``|q|`` reached the current exit level.

    Does not need the horizon. Raises ``ValueError`` on a zero-length epoch,
    which only happens when two crossings share a time stamp.
    """
    if abs(q) < state.threshold_exit:
        return state
    nu = state.nu + 1
    if nu <= 0:
        return EpochState(nu=nu, t_start=t, a_nu=0.0)
    duration = t - state.t_start
    if not duration > 0:
        raise ValueError(f"zero-duration epoch at t={t} (epoch {state.nu} entered at {state.t_start})")
    a_nu = consts.C0 * LOG2 / duration + consts.C1 * state.a_nu
    return replace(state, nu=nu, t_start=t, a_nu=a_nu)


def sigma_opt_gain(t: float, params) -> float:
    return optimal_gain(t, params.a, params.T)


def zero_gain() -> float:
    return 0.0


def constant_gain(g: float) -> float:
    return float(g)


@dataclass(frozen=True)
class SigmaStar:
    """The agnostic strategy: no control until Epoch 1, then ``u = -2 a_nu q``."""

    consts: StrategyConstants = DEFAULT_CONSTANTS
    name: str = "sigma-star"
    mode = MODE_SIGMA_STAR

    def gain(self, t: float, state: EpochState) -> float:
        return sigma_star_gain(state)

    def schedule(self, times: np.ndarray) -> np.ndarray:
        return np.empty(0)


@dataclass(frozen=True)
class SigmaOpt:
    """Optimal policy for a known drift ``a`` and horizon ``T``."""

    a: float
    T: float
    name: str = "sigma-opt"
    consts = DEFAULT_CONSTANTS
    mode = MODE_SCHEDULE

    def gain(self, t: float, state: EpochState | None = None) -> float:
        return optimal_gain(min(t, self.T), self.a, self.T)

    def schedule(self, times: np.ndarray) -> np.ndarray:
        return np.array([self.gain(t) for t in times])


@dataclass(frozen=True)
class ConstantGain:
    g: float = 0.0
    consts = DEFAULT_CONSTANTS
    mode = MODE_SCHEDULE

    @property
    def name(self) -> str:
        return "zero" if self.g == 0.0 else f"const:{self.g!r}"

    def gain(self, t: float, state: EpochState | None = None) -> float:
        return constant_gain(self.g)

    def schedule(self, times: np.ndarray) -> np.ndarray:
        return np.full(len(times), constant_gain(self.g))


def ZeroPolicy() -> ConstantGain:
    return ConstantGain(zero_gain())


def parse_policy(text: str, a: float | None = None, T: float | None = None):
    """Build a policy from ``sigma-star``, ``sigma-opt``, ``zero`` or ``const:<g>``.

    ``sigma-opt`` needs the true ``a`` and ``T``.
    """
    text = text.strip()
    if text == "sigma-star":
        return SigmaStar()
    if text == "sigma-opt":
        if a is None or T is None:
            raise ValueError("sigma-opt needs a and T")
        return SigmaOpt(a=float(a), T=float(T))
    if text == "zero":
        return ZeroPolicy()
    if text.startswith("const:"):
        try:
            g = float(text[len("const:"):])
        except ValueError:
            raise ValueError(f"bad constant gain in policy {text!r}") from None
        if not math.isfinite(g):
            raise ValueError(f"constant gain must be finite, got {g}")
        return ConstantGain(g)
    raise ValueError(f"unknown policy {text!r}; expected sigma-star, sigma-opt, zero or const:<g>")


def bind_policy(policy, a: float, T: float):
    """Re-target a policy at a new true ``a`` (only matters for ``SigmaOpt``).

    Policy names accepted by ``parse_policy`` are parsed first.
    """
    if isinstance(policy, str):
        return parse_policy(policy, a, T)
    if isinstance(policy, SigmaOpt):
        return SigmaOpt(a=float(a), T=float(T))
    return policy
