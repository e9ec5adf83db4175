"""Monte Carlo estimates of expected cost, regret against the optimum, and epoch occupancy."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .classical_lqr import s_opt_closed
from .ou_engine import DivergenceError, PathBatch, SystemParams, default_dt, simulate_paths
from .strategy import SigmaStar, bind_policy

log = logging.getLogger(__name__)

Z95 = 1.959963984540054

SWEEP_FIELDS = (
    "a", "s_opt", "s_est_mean", "s_est_se", "mr", "mr_lo", "mr_hi", "ar", "n_paths", "n_flagged", "max_epoch_seen",
)


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    std_error: float
    n_paths: int
    n_flagged: int = 0

    @classmethod
    def from_costs(cls, costs: np.ndarray, flagged: np.ndarray) -> "CostEstimate":
        good = costs[~flagged]
        n_good = len(good)
        if n_good < 2:
            return cls(math.nan, math.nan, len(costs), int(flagged.sum()))
        return cls(
            mean=float(np.mean(good)),
            std_error=float(np.std(good, ddof=1) / math.sqrt(n_good)),
            n_paths=len(costs),
            n_flagged=int(flagged.sum()),
        )


class ExperimentAborted(RuntimeError):
    """Raised when diverged paths make an estimate invalid."""


def effective_dt(a: float, dt: float) -> float:
    """``dt`` refined by ``16/|a|`` once ``|a| > 16``."""
    return dt * default_dt(a, 1.0)


def run_paths(policy, a, T, dt, n_paths, master_seed=42, start_index=0, threads=1, scheme="exact", zero_noise=False):
    policy = bind_policy(policy, a, T)
    return simulate_paths(
        policy, SystemParams(a, T), dt, n_paths, master_seed=master_seed, start_index=start_index,
        threads=threads, scheme=scheme, zero_noise=zero_noise,
    )


def _checked_estimate(batch: PathBatch, a: float) -> CostEstimate:
    est = CostEstimate.from_costs(batch.costs, batch.flagged)
    if est.n_flagged:
        bad = np.flatnonzero(batch.flagged)[:5] + batch.start_index
        raise ExperimentAborted(
            f"a={a!r}: {est.n_flagged} of {est.n_paths} paths diverged (first path indices {bad.tolist()})"
        )
    return est


def estimate_cost(
    policy, a: float, T: float, dt: float, n_paths: int, master_seed: int = 42, *,
    start_index: int = 0, threads: int = 1, scheme: str = "exact", zero_noise: bool = False,
) -> CostEstimate:
    """Mean and standard error of the path cost over ``n_paths`` independent paths."""
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    batch = run_paths(policy, a, T, dt, n_paths, master_seed, start_index, threads, scheme, zero_noise)
    return _checked_estimate(batch, a)


@dataclass(frozen=True)
class RegretRecord:
    a: float
    s_opt: float
    s_est: CostEstimate
    mr: float
    ar: float
    mr_ci: tuple[float, float]
    max_epoch_seen: int = -1
    dt: float = math.nan

    @classmethod
    def build(cls, a: float, s_opt: float, est: CostEstimate, max_epoch_seen: int = -1, dt: float = math.nan):
        half = Z95 * est.std_error / s_opt
        mr = est.mean / s_opt
        return cls(a, s_opt, est, mr, est.mean - s_opt, (mr - half, mr + half), max_epoch_seen, dt)

    def row(self) -> dict:
        return {
            "a": self.a,
            "s_opt": self.s_opt,
            "s_est_mean": self.s_est.mean,
            "s_est_se": self.s_est.std_error,
            "mr": self.mr,
            "mr_lo": self.mr_ci[0],
            "mr_hi": self.mr_ci[1],
            "ar": self.ar,
            "n_paths": self.s_est.n_paths,
            "n_flagged": self.s_est.n_flagged,
            "max_epoch_seen": self.max_epoch_seen,
        }


def regret_sweep(
    a_grid, policy, T: float = 1.0, dt: float = 1e-3, n_paths: int = 20000, master_seed: int = 42, *,
    threads: int = 1, scheme: str = "exact", refine: bool = True,
) -> list[RegretRecord]:
    """One regret record per drift value.

    Drift ``a_grid[i]`` uses path indices ``[i n_paths, (i+1) n_paths)``.
    With ``refine`` the step is shrunk by ``16/|a|`` for ``|a| > 16``.
    """
    a_grid = [float(a) for a in a_grid]
    if not a_grid:
        raise ValueError("a_grid is empty")
    if not all(math.isfinite(a) for a in a_grid):
        raise ValueError("a_grid must be finite")
    records = []
    for i, a in enumerate(a_grid):
        step = effective_dt(a, dt) if refine else dt
        batch = run_paths(policy, a, T, step, n_paths, master_seed, i * n_paths, threads, scheme)
        est = _checked_estimate(batch, a)
        if batch.multi_crossings.any():
            log.warning("a=%g: %d paths crossed two thresholds in one step", a, int((batch.multi_crossings > 0).sum()))
        records.append(RegretRecord.build(a, s_opt_closed(a, T), est, int(batch.max_epoch.max()), step))
    return records


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def sweep_to_csv(records: list[RegretRecord]) -> str:
    lines = [",".join(SWEEP_FIELDS)]
    for rec in records:
        row = rec.row()
        lines.append(",".join(_fmt(row[k]) for k in SWEEP_FIELDS))
    return "\n".join(lines) + "\n"


def sweep_to_json(records: list[RegretRecord]) -> str:
    # repr round-trips floats exactly, matching the 17-digit CSV
    return json.dumps([r.row() for r in records], indent=2) + "\n"


def binomial_ci(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson interval."""
    alpha = 1.0 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


@dataclass
class EpochOccupancy:
    a: float
    T: float
    dt: float
    n_paths: int
    counts: list[int]  # counts[nu] = paths that entered Epoch nu
    max_epoch: np.ndarray = field(repr=False)
    entry_times: np.ndarray = field(repr=False)

    def probability(self, nu: int) -> float:
        return self.count(nu) / self.n_paths

    def count(self, nu: int) -> int:
        return self.counts[nu] if nu < len(self.counts) else 0

    def ci(self, nu: int) -> tuple[float, float]:
        return binomial_ci(self.count(nu), self.n_paths)

    def to_csv(self) -> str:
        lines = ["nu,count,n_paths,p,p_lo,p_hi"]
        for nu in range(len(self.counts)):
            lo, hi = self.ci(nu)
            lines.append(f"{nu},{self.count(nu)},{self.n_paths},{_fmt(self.probability(nu))},{_fmt(lo)},{_fmt(hi)}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        rows = []
        for nu in range(len(self.counts)):
            lo, hi = self.ci(nu)
            rows.append({"nu": nu, "count": self.count(nu), "n_paths": self.n_paths,
                         "p": self.probability(nu), "p_lo": lo, "p_hi": hi})
        return json.dumps(rows, indent=2) + "\n"


def epoch_statistics(
    a: float, T: float = 1.0, dt: float = 1e-3, n_paths: int = 20000, master_seed: int = 42, *,
    policy=None, threads: int = 1, refine: bool = True,
) -> EpochOccupancy:
    """Fraction of paths entering each epoch, plus per-path max epoch and entry times.

    Rows run from Epoch 0 to one past the deepest epoch seen, so the first
    empty epoch is always listed.
    """
    policy = SigmaStar() if policy is None else policy
    step = effective_dt(a, dt) if refine else dt
    batch = run_paths(policy, a, T, step, n_paths, master_seed, 0, threads)
    _checked_estimate(batch, a)
    deepest = int(batch.max_epoch.max())
    counts = [int((batch.max_epoch >= nu).sum()) for nu in range(max(deepest, -1) + 2)]
    return EpochOccupancy(a, T, step, n_paths, counts, batch.max_epoch, batch.entry_times)


@dataclass(frozen=True)
class PolicyComparison:
    """Ratio ``S(first) / S(second)`` estimated with and without shared noise."""

    ratio_paired: float
    var_paired: float
    ratio_unpaired: float
    var_unpaired: float
    n_paths: int


def _ratio_variance(x: np.ndarray, y: np.ndarray, paired: bool) -> tuple[float, float]:
    mx, my = float(np.mean(x)), float(np.mean(y))
    r = mx / my
    vx, vy = float(np.var(x, ddof=1)), float(np.var(y, ddof=1))
    cov = float(np.cov(x, y)[0, 1]) if paired else 0.0
    var = r * r * (vx / mx**2 + vy / my**2 - 2.0 * cov / (mx * my)) / len(x)
    return r, var


def compare_policies(
    first, second, a: float, T: float = 1.0, dt: float = 1e-3, n_paths: int = 20000, master_seed: int = 42, *,
    threads: int = 1,
) -> PolicyComparison:
    """Common-random-numbers comparison of two policies at the same drift.

    The paired estimate drives both policies with path indices ``[0, n)``;
    the unpaired one moves ``second`` to ``[n, 2n)``.  Both ratio variances
    come from the delta method.
    """
    x = run_paths(first, a, T, dt, n_paths, master_seed, 0, threads)
    y_same = run_paths(second, a, T, dt, n_paths, master_seed, 0, threads)
    y_other = run_paths(second, a, T, dt, n_paths, master_seed, n_paths, threads)
    for batch in (x, y_same, y_other):
        _checked_estimate(batch, a)
    rp, vp = _ratio_variance(x.costs, y_same.costs, paired=True)
    ru, vu = _ratio_variance(x.costs, y_other.costs, paired=False)
    return PolicyComparison(rp, vp, ru, vu, n_paths)


def record_dict(rec: RegretRecord) -> dict:
    out = rec.row()
    out["s_est"] = asdict(rec.s_est)
    return out
