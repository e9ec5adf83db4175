import math

import mpmath
import numpy as np
import pytest

from agnostic_lqr.classical_lqr import (
    logcosh, optimal_gain, riccati_ode, riccati_p_closed, s_opt_closed, s_opt_ode,
)

# 50-digit evaluations of aT - log(s) + log(cosh(log(s + a) - T s)), s = sqrt(a^2 + 1)
MPMATH_SOPT = {
    (0.0, 1.0): 0.43378083048302718703,
    (-1e6, 1.0): 4.9999974999987500016e-7,
    (-1e3, 1.0): 0.00049974987515631238538,
    (-3.0, 2.0): 0.2985621370550226066,
    (5.0, 1.0): 5.4681769762701333809,
    (64.0, 1.0): 118.30356841039897022,
    (300.0, 1.0): 587.20779901831387466,
    (-0.5, 0.5): 0.10318005015811644643,
    (1.0, 1.0): 0.78913659385815032908,
}


def _mp_sopt(a, T):
    mpmath.mp.dps = 50
    a = mpmath.mpf(a)
    s = mpmath.sqrt(a * a + 1)
    return float(a * T - mpmath.log(s) + mpmath.log(mpmath.cosh(mpmath.log(s + a) - T * s)))


@pytest.mark.parametrize(("a", "T"), sorted(MPMATH_SOPT))
def test_s_opt_matches_high_precision(a, T):
    assert s_opt_closed(a, T) == pytest.approx(MPMATH_SOPT[(a, T)], rel=1e-12)


@pytest.mark.parametrize("a", [-700.0, -40.0, -2.5, 0.3, 7.0, 123.0, 800.0])
def test_s_opt_matches_mpmath_live(a):
    assert s_opt_closed(a, 1.3) == pytest.approx(_mp_sopt(a, 1.3), rel=1e-11)


def test_s_opt_at_zero_is_logcosh_T():
    assert s_opt_closed(0.0, 1.0) == pytest.approx(0.4337808304830271, rel=1e-15)
    assert s_opt_closed(0.0, 2.5) == pytest.approx(math.log(math.cosh(2.5)), rel=1e-14)


def test_s_opt_huge_negative_is_small_and_positive():
    values = [s_opt_closed(a, 1.0) for a in (-1e3, -1e4, -1e5, -1e6)]
    assert all(v > 0 for v in values)
    assert values[-1] < 1e-5
    assert all(x > y for x, y in zip(values, values[1:]))


def test_s_opt_increasing_in_a():
    grid = np.arange(-50.0, 50.0, 0.1)
    vals = np.array([s_opt_closed(a, 1.0) for a in grid])
    nxt = np.array([s_opt_closed(a + 0.1, 1.0) for a in grid])
    assert np.all(nxt > vals)


def test_s_opt_positive_everywhere():
    for a in np.linspace(-2000, 2000, 401):
        assert s_opt_closed(a, 1.0) > 0


def test_logcosh_overflow_safe():
    assert logcosh(0.0) == 0.0
    assert logcosh(1000.0) == pytest.approx(1000.0 - math.log(2.0))
    assert logcosh(-3.0) == pytest.approx(math.log(math.cosh(3.0)), rel=1e-15)


def test_p_boundary_and_zero_drift():
    assert riccati_p_closed(1.0, 3.0, 1.0) == 0.0
    assert riccati_p_closed(2.0, -7.0, 2.0) == 0.0
    assert riccati_p_closed(0.0, 0.0, 1.0) == pytest.approx(0.7615941559557649, rel=1e-15)
    for t in (0.0, 0.3, 0.9):
        assert riccati_p_closed(t, 0.0, 1.0) == pytest.approx(math.tanh(1.0 - t), rel=1e-14)


def test_p_rejects_t_outside_horizon():
    with pytest.raises(ValueError):
        riccati_p_closed(1.5, 0.0, 1.0)


def test_p_closed_vs_rk4_at_a5():
    sol = riccati_ode(5.0, 1.0, 1e-5)
    assert sol.p_knots[0] == pytest.approx(riccati_p_closed(0.0, 5.0, 1.0), rel=1e-8)


def test_rk4_oracle_examples():
    sol = riccati_ode(1.0, 1.0, 1e-5)
    assert sol.r(1.0) == 0.0 and sol.p(1.0) == 0.0
    assert abs(sol.p_knots[0] - riccati_p_closed(0.0, 1.0, 1.0)) <= 1e-8
    r0 = s_opt_ode(-3.0, 2.0, 1e-5)
    assert abs(r0 - s_opt_closed(-3.0, 2.0)) <= 1e-8 * max(1.0, r0)


def test_rk4_rejects_coarse_step():
    with pytest.raises(ValueError):
        riccati_ode(0.0, 1.0, 0.1)


@pytest.mark.parametrize("a", [-20.0, -5.0, -1.0, 0.0, 1.0, 5.0, 20.0])
@pytest.mark.parametrize("T", [0.5, 1.0, 2.0])
def test_closed_forms_agree_with_oracle(a, T):
    sol = riccati_ode(a, T)
    knots = sol.t[::50]
    closed = np.array([riccati_p_closed(t, a, T) for t in knots])
    assert np.max(np.abs(closed - sol.p_knots[::50])) <= 1e-7
    r0 = sol.r_knots[0]
    assert abs(s_opt_closed(a, T) - r0) <= 1e-6 * max(1.0, abs(r0))


def test_cost_to_go_is_time_shifted_sopt():
    # r(t; a, T) = S_opt(a) over the remaining horizon T - t
    sol = riccati_ode(2.0, 1.5)
    for t in (0.25, 0.75, 1.2):
        assert sol.r(t) == pytest.approx(s_opt_closed(2.0, 1.5 - t), rel=1e-7)


@pytest.mark.parametrize("a", [-5.0, -1.0, 0.0, 1.0, 5.0])
def test_riccati_residual(a):
    T, h = 1.0, 1e-5
    for t in np.linspace(0.01, 0.99, 100):
        dp = (riccati_p_closed(t + h, a, T) - riccati_p_closed(t - h, a, T)) / (2 * h)
        p = riccati_p_closed(t, a, T)
        assert abs(-dp - (2 * a * p + 1 - p * p)) <= 1e-6


@pytest.mark.parametrize("a", [-20.0, 20.0])
def test_riccati_residual_fast_dynamics(a):
    # the three-point stencil's truncation error reaches ~3e-6 at |a| = 20,
    # so use the five-point centred stencil with the same h
    T, h = 1.0, 1e-5

    def p(x):
        return riccati_p_closed(x, a, T)

    for t in np.linspace(0.01, 0.99, 100):
        dp = (-p(t + 2 * h) + 8 * p(t + h) - 8 * p(t - h) + p(t - 2 * h)) / (12 * h)
        assert abs(-dp - (2 * a * p(t) + 1 - p(t) ** 2)) <= 1e-6


def test_optimal_gain_examples():
    assert optimal_gain(1.0, 4.0, 1.0) == 0.0
    assert optimal_gain(0.0, 0.0, 1.0) == pytest.approx(0.7615942, abs=1e-7)
    rng = np.random.default_rng(0)
    for a, t in zip(rng.uniform(-50, 50, 300), rng.uniform(0, 1, 300)):
        assert optimal_gain(t, a, 1.0) >= 0.0


def test_optimal_gain_sign_matches_oracle():
    for a in (-50.0, -3.0, 0.0, 12.0, 50.0):
        sol = riccati_ode(a, 1.0)
        assert np.all(sol.p_knots >= -1e-12)
