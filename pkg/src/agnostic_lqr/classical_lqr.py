"""Finite-horizon scalar LQR with known drift.

For ``dq = (a q + u) dt + dW`` and running cost ``q^2 + u^2`` on ``[0, T]``
the optimal cost-to-go is ``J(q, t) = p(t) q^2 + r(t)`` where

    -p' = 2 a p + 1 - p^2,   p(T) = 0
    -r' = p,                 r(T) = 0

and the optimal feedback is ``u = -p(t) q``.  Closed forms are evaluated
in log space so that ``|a| T`` in the hundreds does not overflow; a
fourth-order Runge-Kutta integrator of the same ODEs is kept as an
independent oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

LOG2 = math.log(2.0)

# p above this during integration means the ODE was misused.
P_BLOWUP = 1e12


def logcosh(x: float) -> float:
    """Overflow-safe ``log(cosh(x))``."""
    ax = abs(x)
    return ax + math.log1p(math.exp(-2.0 * ax)) - LOG2


def riccati_p_closed(t: float, a: float, T: float) -> float:
    """Closed-form Riccati gain ``p(t; a)`` on ``[0, T]``.

    Uses ``artanh(a / sqrt(a^2 + 1)) = asinh(a)``.  When the tanh argument is
    negative, ``a - s tanh(y)`` is rewritten as ``1/(s - a) - s (1 + tanh y)``
    which avoids the cancellation between ``a`` and ``s`` for ``a << 0``.
    """
    if not 0.0 <= t <= T:
        raise ValueError(f"t={t} outside [0, T={T}]")
    if t == T:
        return 0.0
    s = math.hypot(a, 1.0)
    y = (t - T) * s + math.asinh(a)
    if y < 0.0:
        e2y = math.exp(2.0 * y)
        a_plus_s = 1.0 / (s - a) if a < 0.0 else a + s
        p = a_plus_s - s * (2.0 * e2y / (1.0 + e2y))
    else:
        p = a - s * math.tanh(y)
    return max(p, 0.0)


def s_opt_closed(a: float, T: float) -> float:
    """Expected optimal cost ``S_opt(a) = r(0; a)`` from ``q(0) = 0``.

    Algebraically equal to ``aT - log s + logcosh(asinh(a) - T s)`` with
    ``s = sqrt(a^2 + 1)``; the branches below expand the logcosh so the
    leading ``aT`` and ``Ts`` terms are combined before rounding.
    """
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    s = math.hypot(a, 1.0)
    L = math.asinh(a)
    x = L - T * s
    tail = math.log1p(math.exp(-2.0 * abs(x)))
    if x <= 0.0:
        # logcosh(x) = T s - L + tail - log 2
        if a < 0.0:
            # T (a + s) - log s - L - log 2 with L = -log(s + |a|)
            lead = T / (s - a)
            logs = math.log1p(-1.0 / (2.0 * s * (s - a)))
        else:
            lead = T * (a + s)
            logs = -math.log(s) - L - LOG2
        return lead + logs + tail
    # x > 0 only happens for a > 0: aT - Ts = -T / (a + s)
    return -T / (a + s) - math.log(s) + L - LOG2 + tail


def optimal_gain(t: float, a: float, T: float) -> float:
    """Feedback gain of the optimal policy; apply ``u = -K q``."""
    return riccati_p_closed(t, a, T)


@numba.njit(cache=True, nogil=True)
def _rk4_backward(a, T, n):
    # integrate in s = T - t: dp/ds = 2ap + 1 - p^2, dr/ds = p
    h = T / n
    p_knots = np.empty(n + 1)
    r_knots = np.empty(n + 1)
    p = 0.0
    r = 0.0
    p_knots[n] = p
    r_knots[n] = r
    for i in range(n):
        k1p = 2.0 * a * p + 1.0 - p * p
        k1r = p
        p2 = p + 0.5 * h * k1p
        k2p = 2.0 * a * p2 + 1.0 - p2 * p2
        k2r = p2
        p3 = p + 0.5 * h * k2p
        k3p = 2.0 * a * p3 + 1.0 - p3 * p3
        k3r = p3
        p4 = p + h * k3p
        k4p = 2.0 * a * p4 + 1.0 - p4 * p4
        k4r = p4
        p = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        r = r + h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
        if not abs(p) <= P_BLOWUP:
            return p_knots, r_knots, False
        p_knots[n - 1 - i] = p
        r_knots[n - 1 - i] = r
    return p_knots, r_knots, True


@dataclass(frozen=True)
class RiccatiSolution:
    """Tabulated ``p`` and ``r`` on a uniform grid; linear interpolation between knots."""

    a: float
    T: float
    t: np.ndarray
    p_knots: np.ndarray
    r_knots: np.ndarray

    def p(self, t):
        return np.interp(t, self.t, self.p_knots)

    def r(self, t):
        return np.interp(t, self.t, self.r_knots)


def riccati_ode(a: float, T: float, dt_ode: float | None = None) -> RiccatiSolution:
    """Integrate the Riccati pair backward from ``T`` with classical RK4."""
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    if dt_ode is None:
        dt_ode = 1e-5 * T
    if not 0.0 < dt_ode <= T / 100.0 * (1 + 1e-12):
        raise ValueError(f"dt_ode={dt_ode} must lie in (0, T/100]")
    n = max(100, int(round(T / dt_ode)))
    p_knots, r_knots, ok = _rk4_backward(float(a), float(T), n)
    if not ok:
        raise FloatingPointError(f"Riccati integration blew up (|p| > {P_BLOWUP:g}) for a={a}")
    return RiccatiSolution(a=a, T=T, t=np.linspace(0.0, T, n + 1), p_knots=p_knots, r_knots=r_knots)


def s_opt_ode(a: float, T: float, dt_ode: float | None = None) -> float:
    return float(riccati_ode(a, T, dt_ode).r_knots[0])
