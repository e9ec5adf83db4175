"""Exit criteria, each at its stated tolerance and time budget.

Run alone with ``python3 -m pytest tests/test_acceptance.py``; a PASS/FAIL
line per criterion is printed at the end of the session.
"""
import math
import time

import numpy as np
import pytest

from agnostic_lqr.calibration import load_calibration
from agnostic_lqr.classical_lqr import riccati_ode, riccati_p_closed, s_opt_closed
from agnostic_lqr.cli import main
from agnostic_lqr.montecarlo import epoch_statistics, estimate_cost
from agnostic_lqr.ou_engine import SimGrid, SystemParams, simulate_path
from agnostic_lqr.strategy import SigmaStar
from agnostic_lqr.verify import (
    REGRET_GRID, check_hitting_window, check_reflection, check_regret_bounded, check_sopt_asymptotics,
    check_variance, hitting_containment,
)

pytestmark = pytest.mark.acceptance


def test_closed_form_matches_oracle(criterion):
    start = time.perf_counter()
    worst_p, worst_r = 0.0, 0.0
    ok = True
    for a in (-20.0, -5.0, -1.0, 0.0, 1.0, 5.0, 20.0):
        for T in (0.5, 1.0, 2.0):
            sol = riccati_ode(a, T, 1e-5 * T)
            closed_p = np.array([riccati_p_closed(t, a, T) for t in sol.t])
            dp = float(np.max(np.abs(closed_p - sol.p_knots)))
            r0 = sol.r_knots[0]
            dr = abs(s_opt_closed(a, T) - r0) / max(1.0, abs(r0))
            worst_p, worst_r = max(worst_p, dp), max(worst_r, dr)
            ok &= dp <= 1e-7 and dr <= 1e-6
    elapsed = time.perf_counter() - start
    ok &= elapsed < 5.0
    criterion(1, "closed form vs Riccati oracle", ok,
              f"max |dp| = {worst_p:.2e}, max rel |dr| = {worst_r:.2e}, {elapsed:.2f} s")
    assert worst_p <= 1e-7 and worst_r <= 1e-6
    assert elapsed < 5.0


@pytest.mark.slow
def test_monte_carlo_matches_closed_form(criterion):
    start = time.perf_counter()
    z = {}
    for a in (-5.0, 0.0, 5.0):
        est = estimate_cost("sigma-opt", a, 1.0, 1e-3, 20_000)
        z[a] = (est.mean - s_opt_closed(a, 1.0)) / est.std_error
    elapsed = time.perf_counter() - start
    ok = all(abs(v) <= 3 for v in z.values()) and elapsed < 60
    detail = ", ".join(f"a={a:g}: z={v:+.2f}" for a, v in z.items())
    criterion(2, "optimal-policy Monte Carlo vs closed form", ok, f"{detail}, {elapsed:.1f} s")
    assert all(abs(v) <= 3 for v in z.values())
    assert elapsed < 60


def test_transition_variance(criterion):
    start = time.perf_counter()
    reports = [check_variance(b, t, 100_000, seed=42) for b in (-2.0, 0.0, 2.0) for t in (0.5, 1.0)]
    elapsed = time.perf_counter() - start
    worst = max(abs(r.statistic / r.details["target"] - 1) for r in reports)
    ok = all(r.passed for r in reports) and elapsed < 30
    criterion(3, "transition variance", ok,
              f"worst rel err {worst:.2e} vs tol {reports[0].tolerance:.2e}, {elapsed:.1f} s")
    assert all(r.passed for r in reports)
    assert elapsed < 30


@pytest.mark.slow
def test_reflection_principle(criterion):
    start = time.perf_counter()
    reports = [check_reflection(b, 1.0, None, 200_000, seed=42) for b in (-1.0, 0.0, 1.0)]
    elapsed = time.perf_counter() - start
    ok = all(r.passed for r in reports) and elapsed < 60
    detail = ", ".join(f"{r.name}={r.statistic:.4f}" for r in reports)
    criterion(4, "reflection principle", ok, f"{detail}, {elapsed:.1f} s")
    assert all(r.passed for r in reports)
    assert elapsed < 60


@pytest.mark.slow
def test_hitting_window(criterion):
    start = time.perf_counter()
    rep = check_hitting_window(20.0, 0.5, 10_000, seed=42)
    p20, se20, _ = hitting_containment(20.0, 0.5, 10_000, seed=42)
    p40, se40, _ = hitting_containment(40.0, 0.5, 10_000, seed=42)
    elapsed = time.perf_counter() - start
    floor = p20 - 2 * math.hypot(se20, se40)
    ok = rep.passed and p40 >= floor and elapsed < 60
    criterion(5, "hitting-time window", ok,
              f"P(a=20) = {p20:.4f} >= {load_calibration().hitting_threshold(20.0, 0.5):.4f}, "
              f"P(a=40) = {p40:.4f} >= {floor:.4f}, {elapsed:.1f} s")
    assert rep.passed
    assert p40 >= floor
    assert elapsed < 60


def test_optimal_cost_asymptotics(criterion):
    start = time.perf_counter()
    pos, neg = check_sopt_asymptotics(1.0)
    elapsed = time.perf_counter() - start
    ok = pos.passed and neg.passed and elapsed < 5
    criterion(6, "optimal cost asymptotics", ok,
              f"min S/a = {pos.statistic:.4f}, min S|a| = {neg.statistic:.4f}, {elapsed:.2f} s")
    assert pos.passed and neg.passed
    assert elapsed < 5


@pytest.mark.slow
def test_regret_bounded(criterion):
    start = time.perf_counter()
    reports = check_regret_bounded(1.0, 1e-3, 20_000, seed=42, threads=1)
    elapsed = time.perf_counter() - start
    ok = all(r.passed for r in reports) and elapsed < 600
    detail = ", ".join(f"{r.name}={r.statistic:.3f}<={r.target_hi:g}" for r in reports[1:])
    criterion(7, "sigma-star regret boundedness", ok,
              f"flags={reports[0].details['n_flagged']}, {detail}, {elapsed:.1f} s")
    assert all(r.passed for r in reports)
    assert elapsed < 600


@pytest.mark.slow
def test_epoch_two_rarity(criterion):
    start = time.perf_counter()
    drifts = (5.0, 10.0, 20.0)
    occ = [epoch_statistics(a, 1.0, 1e-3, 100_000, 42) for a in drifts]
    elapsed = time.perf_counter() - start
    p = [o.probability(2) for o in occ]
    ci = [o.ci(2) for o in occ]
    # strictly decreasing beyond noise: each upper bound below the previous lower bound
    decreasing = all(ci[i + 1][1] < ci[i][0] for i in range(len(drifts) - 1))
    ok = decreasing and elapsed < 120
    detail = ", ".join(f"a={a:g}: {o.count(2)}/{o.n_paths} [{lo:.1e}, {hi:.1e}]"
                       for a, o, (lo, hi) in zip(drifts, occ, ci))
    criterion(8, "Epoch 2 rarity", ok, f"P(E_2) {detail}, {elapsed:.1f} s")
    assert decreasing, f"P(E_2) = {p} not strictly decreasing beyond binomial CIs {ci}"
    assert elapsed < 120


def test_sigma_star_horizon_independent(criterion):
    start = time.perf_counter()
    short = simulate_path(SigmaStar(), SystemParams(12.0, 1.0), SimGrid.for_horizon(1.0, 1e-3, 42, 0))
    long = simulate_path(SigmaStar(), SystemParams(12.0, 2.0), SimGrid.for_horizon(2.0, 1e-3, 42, 0))
    elapsed = time.perf_counter() - start
    head = short.to_csv().splitlines()
    same = head == long.to_csv().splitlines()[:len(head)]
    ok = same and elapsed < 1.0
    criterion(9, "sigma-star horizon independence", ok, f"{len(head) - 1} rows identical={same}, {elapsed:.3f} s")
    assert same
    assert elapsed < 1.0


@pytest.mark.slow
def test_sweep_thread_determinism(criterion, tmp_path, capsys):
    grid = ",".join(f"{a:g}" for a in REGRET_GRID)
    outputs = []
    for threads in ("1", "8"):
        path = tmp_path / f"sweep_t{threads}.csv"
        code = main(["regret-sweep", f"--a-grid={grid}", "--policy", "sigma-star", "--threads", threads,
                     "--out", str(path)])
        assert code == 0, capsys.readouterr().err
        outputs.append(path.read_bytes())
    same = outputs[0] == outputs[1]
    rows = outputs[0].count(b"\n") - 1
    criterion(10, "thread-count determinism", same, f"{len(outputs[0])} bytes, {rows} rows, identical={same}")
    assert same
