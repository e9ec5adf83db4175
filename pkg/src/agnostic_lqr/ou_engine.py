"""Simulation of the controlled scalar SDE ``dq = (a q + u) dt + dW``.

All policies in this package are linear feedback ``u = -g q`` with ``g``
held fixed over a grid step, so each step is an exact Ornstein-Uhlenbeck
transition with coefficient ``b = a - g``.  Euler-Maruyama is available for
cross-checks only.

Two routes share the same arithmetic:

* ``simulate_path`` walks one path in pure Python through the policy
  objects and records the full trajectory.
* ``simulate_paths`` runs many paths through a compiled per-path kernel and
  returns only per-path summaries.

Noise for path ``i`` comes from a Philox counter-based generator keyed by
``(master_seed, i)``, so every path is a pure function of those two
integers, independent of batching and thread count.  Draws are sequential
within a path, so a longer horizon extends the same noise sequence.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .strategy import MODE_SIGMA_STAR, EpochState, sigma_star_observe

LOG2 = math.log(2.0)
DIVERGENCE_CEILING = 1e150
SERIES_CUTOFF = 1e-4
MAX_RECORDED_EPOCHS = 32
BLOCK_ELEMENTS = 1 << 22

SCHEMES = ("exact", "euler")


class DivergenceError(ArithmeticError):
    """State left the representable range; the path is invalid."""


@dataclass(frozen=True)
class SystemParams:
    a: float
    T: float

    def __post_init__(self):
        if not math.isfinite(self.a):
            raise ValueError(f"a must be finite, got {self.a}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T must be positive and finite, got {self.T}")


def n_steps_for(T: float, dt: float) -> int:
    # guard against T/dt landing a hair above an integer
    return max(1, math.ceil(T / dt * (1.0 - 1e-12)))


def time_grid(T: float, dt: float) -> np.ndarray:
    """Uniform grid ``k dt`` with the last point pinned to ``T``."""
    n = n_steps_for(T, dt)
    times = np.arange(n + 1, dtype=float) * dt
    times[-1] = T
    return times


def default_dt(a: float, base: float = 1e-3) -> float:
    """Grid step refined for fast dynamics: ``base`` up to ``|a| = 16``, then ``base * 16/|a|``."""
    return base * min(1.0, 16.0 / abs(a)) if a != 0 else base


@dataclass(frozen=True)
class SimGrid:
    dt: float
    n_steps: int
    master_seed: int = 42
    path_index: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.path_index < 0:
            raise ValueError("path_index must be >= 0")

    @classmethod
    def for_horizon(cls, T: float, dt: float, master_seed: int = 42, path_index: int = 0) -> "SimGrid":
        return cls(dt=dt, n_steps=n_steps_for(T, dt), master_seed=master_seed, path_index=path_index)

    def times(self, T: float) -> np.ndarray:
        times = np.arange(self.n_steps + 1, dtype=float) * self.dt
        times[-1] = T
        return times


def path_generator(master_seed: int, path_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(master_seed), int(path_index)]))


def path_noise(master_seed: int, path_index: int, n_steps: int) -> np.ndarray:
    return path_generator(master_seed, path_index).standard_normal(n_steps)


def variance_xtb(b: float, t: float) -> float:
    """Variance ``(1 - exp(-2bt)) / (2b)`` of the discounted, centred OU state at time ``t``.

    Below ``|2bt| = 1e-4`` a five-term series in ``x = 2bt`` is used, written
    as ``t - correction`` so the result is rounded once.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    x = 2.0 * b * t
    if abs(x) < SERIES_CUTOFF:
        return t - t * (0.5 * x) * (1.0 - x / 3.0 + x * x / 12.0 - x * x * x / 60.0)
    try:
        return -math.expm1(-x) / (2.0 * b)
    except OverflowError:
        return math.inf


def step_variance(b: float, h: float) -> float:
    """Conditional variance of ``q(t+h)`` given ``q(t)``: ``exp(2bh) * variance_xtb(b, h)``.

    Written as ``expm1(2bh) / (2b)`` so that strongly damped steps do not form
    ``0 * inf``.
    """
    x = 2.0 * b * h
    if abs(x) < SERIES_CUTOFF:
        return h + h * (0.5 * x) * (1.0 + x / 3.0 + x * x / 12.0 + x * x * x / 60.0)
    try:
        return math.expm1(x) / (2.0 * b)
    except OverflowError:
        return math.inf


def exact_ou_step(q: float, b: float, dt: float, z: float) -> float:
    """One exact transition of ``dq = b q dt + dW`` driven by the standard normal ``z``."""
    try:
        mean = q * math.exp(b * dt)
    except OverflowError:
        raise DivergenceError(f"exp({b * dt:g}) overflows") from None
    if not abs(mean) <= DIVERGENCE_CEILING:
        raise DivergenceError(f"|q e^(b dt)| = {abs(mean):g} exceeds {DIVERGENCE_CEILING:g}")
    q_new = mean + math.sqrt(step_variance(b, dt)) * z
    if not abs(q_new) <= DIVERGENCE_CEILING:
        raise DivergenceError(f"|q| = {abs(q_new):g} exceeds {DIVERGENCE_CEILING:g}")
    return q_new


def euler_step(q: float, b: float, dt: float, z: float) -> float:
    q_new = q + b * q * dt + math.sqrt(dt) * z
    if not abs(q_new) <= DIVERGENCE_CEILING:
        raise DivergenceError(f"|q| = {abs(q_new):g} exceeds {DIVERGENCE_CEILING:g}")
    return q_new


@dataclass
class Trajectory:
    times: np.ndarray
    q: np.ndarray
    u: np.ndarray
    epoch: np.ndarray
    cum_cost: np.ndarray
    cost: float
    flagged: bool = False
    multi_crossings: int = 0

    def to_csv(self) -> str:
        lines = ["t,q,u,epoch,cum_cost"]
        for t, q, u, e, c in zip(self.times, self.q, self.u, self.epoch, self.cum_cost):
            lines.append(f"{t:.17g},{q:.17g},{u:.17g},{int(e)},{c:.17g}")
        return "\n".join(lines) + "\n"


def simulate_path(policy, params: SystemParams, grid: SimGrid, noise=None, scheme: str = "exact") -> Trajectory:
    """Simulate one path and record ``(t, q, u, epoch, cumulative cost)`` on the grid.

    The gain is read at the left end of each step and held over it; the
    epoch state is updated from the post-step ``q``.  The step cost is the
    trapezoid of ``(1 + g^2) q^2`` over its end points.  ``noise`` replaces the
    seeded draws (length ``n_steps``); pass zeros for a noiseless path.
    A diverged path stops early, keeps NaN beyond the failure and has
    ``cost = inf``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    step = exact_ou_step if scheme == "exact" else euler_step
    n = grid.n_steps
    times = grid.times(params.T)
    z = path_noise(grid.master_seed, grid.path_index, n) if noise is None else np.asarray(noise, dtype=float)
    if z.shape != (n,):
        raise ValueError(f"noise must have shape ({n},), got {z.shape}")

    q_arr = np.full(n + 1, np.nan)
    u_arr = np.full(n + 1, np.nan)
    epochs = np.full(n + 1, -1, dtype=np.int64)
    cum = np.full(n + 1, np.nan)
    consts = policy.consts
    state = EpochState()
    q = 0.0
    cost = 0.0
    multi = 0
    q_arr[0] = q
    cum[0] = 0.0
    for k in range(n):
        t = times[k]
        h = times[k + 1] - t
        g = policy.gain(t, state)
        u_arr[k] = -g * q
        try:
            q_new = step(q, params.a - g, h, z[k])
        except DivergenceError:
            epochs[k + 1:] = state.nu
            return Trajectory(times, q_arr, u_arr, epochs, cum, math.inf, flagged=True, multi_crossings=multi)
        cost += 0.5 * h * (1.0 + g * g) * (q * q + q_new * q_new)
        q = q_new
        state = sigma_star_observe(state, times[k + 1], q, consts)
        if abs(q) >= state.threshold_exit:
            multi += 1
        q_arr[k + 1] = q
        epochs[k + 1] = state.nu
        cum[k + 1] = cost
    u_arr[n] = -policy.gain(times[n], state) * q
    return Trajectory(times, q_arr, u_arr, epochs, cum, cost, multi_crossings=multi)


@numba.njit(cache=True, nogil=True)
def _step_variance(b, h):
    x = 2.0 * b * h
    if abs(x) < SERIES_CUTOFF:
        return h + h * (0.5 * x) * (1.0 + x / 3.0 + x * x / 12.0 + x * x * x / 60.0)
    return math.expm1(x) / (2.0 * b)


@numba.njit(cache=True, nogil=True)
def _simulate_block(z, times, a, mode, schedule, c0, c1, euler, costs, flagged, max_epoch, entry_times, multi):
    n_paths, n = z.shape
    n_rec = entry_times.shape[1]
    for i in range(n_paths):
        q = 0.0
        nu = -1
        t_start = 0.0
        a_nu = 0.0
        thr = 1.0
        cost = 0.0
        bad = False
        n_multi = 0
        for k in range(n):
            t = times[k]
            h = times[k + 1] - t
            if mode == MODE_SIGMA_STAR:
                g = 2.0 * a_nu if nu >= 1 else 0.0
            else:
                g = schedule[k]
            b = a - g
            if euler:
                q_new = q + b * q * h + math.sqrt(h) * z[i, k]
            else:
                mean = q * math.exp(b * h)
                if not abs(mean) <= DIVERGENCE_CEILING:
                    bad = True
                    break
                q_new = mean + math.sqrt(_step_variance(b, h)) * z[i, k]
            if not abs(q_new) <= DIVERGENCE_CEILING:
                bad = True
                break
            cost += 0.5 * h * (1.0 + g * g) * (q * q + q_new * q_new)
            q = q_new
            if abs(q) >= thr:
                t_next = times[k + 1]
                nu += 1
                if nu >= 1:
                    a_nu = c0 * LOG2 / (t_next - t_start) + c1 * a_nu
                t_start = t_next
                thr *= 2.0
                if nu < n_rec:
                    entry_times[i, nu] = t_next
                if abs(q) >= thr:
                    n_multi += 1
        costs[i] = math.inf if bad else cost
        flagged[i] = bad
        max_epoch[i] = nu
        multi[i] = n_multi


@dataclass
class PathBatch:
    """Per-path summaries, ordered by path index."""

    start_index: int
    costs: np.ndarray
    flagged: np.ndarray
    max_epoch: np.ndarray
    entry_times: np.ndarray  # [path, nu]; NaN where epoch nu was not entered
    multi_crossings: np.ndarray

    @property
    def n_paths(self) -> int:
        return len(self.costs)


def simulate_paths(
    policy,
    params: SystemParams,
    dt: float,
    n_paths: int,
    master_seed: int = 42,
    start_index: int = 0,
    threads: int = 1,
    scheme: str = "exact",
    zero_noise: bool = False,
) -> PathBatch:
    """Run paths ``start_index .. start_index + n_paths - 1`` through the compiled kernel.

    Results do not depend on ``threads``: each path is computed from its own
    noise stream and written to a fixed slot.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    times = time_grid(params.T, dt)
    n = len(times) - 1
    schedule = np.ascontiguousarray(policy.schedule(times), dtype=float)
    c0, c1 = float(policy.consts.C0), float(policy.consts.C1)

    costs = np.empty(n_paths)
    flagged = np.zeros(n_paths, dtype=np.bool_)
    max_epoch = np.empty(n_paths, dtype=np.int64)
    entry = np.full((n_paths, MAX_RECORDED_EPOCHS), np.nan)
    multi = np.zeros(n_paths, dtype=np.int64)

    block = max(1, min(1024, BLOCK_ELEMENTS // n))

    def run(lo: int) -> None:
        hi = min(lo + block, n_paths)
        z = np.zeros((hi - lo, n))
        if not zero_noise:
            for j in range(lo, hi):
                z[j - lo] = path_noise(master_seed, start_index + j, n)
        _simulate_block(
            z, times, float(params.a), policy.mode, schedule, c0, c1, scheme == "euler",
            costs[lo:hi], flagged[lo:hi], max_epoch[lo:hi], entry[lo:hi], multi[lo:hi],
        )

    starts = range(0, n_paths, block)
    if threads <= 1:
        for lo in starts:
            run(lo)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, starts))
    return PathBatch(start_index, costs, flagged, max_epoch, entry, multi)
