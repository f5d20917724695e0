"""Compiled inner loops for the fixed-step integrators.

The formulas here mirror :mod:`hybridkuramoto.model` (full system) and
:mod:`hybridkuramoto.limit_system` (single-oscillator reduction) exactly;
the unit tests assert bitwise-level agreement between the compiled and
reference right-hand sides.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_NONFINITE = 1

LIMIT_CROSSED = 0
LIMIT_STALLED = 1      # v reached 0 before the section
LIMIT_HORIZON = 2      # step budget exhausted before the section

# Bisection depth for in-step crossing localization.  64 halvings push the
# substep window to the float64 resolution limit, so the phase error at the
# section is far below 1e-10 for any attainable speed.
_BISECT_ITERS = 64


@njit(cache=True, nogil=True)
def full_rhs(theta, v, m, d, omega, lam, n):
    N = theta.shape[0]
    tdot = np.empty(N)
    vdot = np.empty(N - n)
    for j in range(N):
        c = 0.0
        for k in range(N):
            c += np.sin(theta[k] - theta[j])
        g = omega[j] + (lam / N) * c
        if j < n:
            tdot[j] = g / d[j]
        else:
            tdot[j] = v[j - n]
            vdot[j - n] = (g - d[j] * v[j - n]) / m[j]
    return tdot, vdot


@njit(cache=True, nogil=True)
def full_rk4_step(theta, v, m, d, omega, lam, n, dt):
    k1t, k1v = full_rhs(theta, v, m, d, omega, lam, n)
    k2t, k2v = full_rhs(theta + 0.5 * dt * k1t, v + 0.5 * dt * k1v, m, d, omega, lam, n)
    k3t, k3v = full_rhs(theta + 0.5 * dt * k2t, v + 0.5 * dt * k2v, m, d, omega, lam, n)
    k4t, k4v = full_rhs(theta + dt * k3t, v + dt * k3v, m, d, omega, lam, n)
    theta_out = theta + (dt / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
    v_out = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return theta_out, v_out


@njit(cache=True, nogil=True)
def full_rk4_sampled(theta0, v0, m, d, omega, lam, n, dt, n_steps, sample_every,
                     out_theta, out_v):
    """Fixed-step RK4 run writing every ``sample_every``-th state.

    Returns ``(samples_written, status, fault_step)``; on a non-finite
    state the run stops after the last good sample.
    """
    theta = theta0.copy()
    v = v0.copy()
    out_theta[0] = theta
    out_v[0] = v
    si = 1
    for i in range(n_steps):
        theta, v = full_rk4_step(theta, v, m, d, omega, lam, n, dt)
        if (i + 1) % sample_every == 0 or i == n_steps - 1:
            ok = True
            for j in range(theta.shape[0]):
                if not np.isfinite(theta[j]):
                    ok = False
            for j in range(v.shape[0]):
                if not np.isfinite(v[j]):
                    ok = False
            if not ok:
                return si, STATUS_NONFINITE, i + 1
            if (i + 1) % sample_every == 0:
                out_theta[si] = theta
                out_v[si] = v
                si += 1
    return si, STATUS_OK, -1


# Dormand-Prince 5(4) coefficients (same tableau as the classic DOPRI5).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])
_DP_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
])


@njit(cache=True, nogil=True)
def full_dp45_step(theta, v, m, d, omega, lam, n, dt, abs_tol, rel_tol):
    """One embedded Dormand-Prince step; returns state, error norm."""
    N = theta.shape[0]
    K = v.shape[0]
    kt = np.empty((7, N))
    kv = np.empty((7, K))
    kt[0], kv[0] = full_rhs(theta, v, m, d, omega, lam, n)
    for s in range(1, 6):
        tht = theta.copy()
        vt = v.copy()
        for q in range(s):
            a = _DP_A[s, q]
            if a != 0.0:
                tht = tht + dt * a * kt[q]
                vt = vt + dt * a * kv[q]
        kt[s], kv[s] = full_rhs(tht, vt, m, d, omega, lam, n)
    theta5 = theta.copy()
    v5 = v.copy()
    for s in range(6):
        b = _DP_B5[s]
        if b != 0.0:
            theta5 = theta5 + dt * b * kt[s]
            v5 = v5 + dt * b * kv[s]
    kt[6], kv[6] = full_rhs(theta5, v5, m, d, omega, lam, n)
    err = 0.0
    for j in range(N):
        e4 = 0.0
        for s in range(7):
            e4 += dt * (_DP_B5[s] - _DP_B4[s]) * kt[s, j]
        sc = abs_tol + rel_tol * max(abs(theta[j]), abs(theta5[j]))
        err += (e4 / sc) ** 2
    for j in range(K):
        e4 = 0.0
        for s in range(7):
            e4 += dt * (_DP_B5[s] - _DP_B4[s]) * kv[s, j]
        sc = abs_tol + rel_tol * max(abs(v[j]), abs(v5[j]))
        err += (e4 / sc) ** 2
    err = np.sqrt(err / (N + K))
    return theta5, v5, err


@njit(cache=True, nogil=True)
def limit_rhs(v, th, m, d, omega, lamR, theta_star):
    vdot = (-d * v + omega + lamR * np.sin(theta_star - th)) / m
    return vdot, v


@njit(cache=True, nogil=True)
def limit_rk4_step(v, th, m, d, omega, lamR, theta_star, dt):
    k1v, k1t = limit_rhs(v, th, m, d, omega, lamR, theta_star)
    k2v, k2t = limit_rhs(v + 0.5 * dt * k1v, th + 0.5 * dt * k1t, m, d, omega, lamR, theta_star)
    k3v, k3t = limit_rhs(v + 0.5 * dt * k2v, th + 0.5 * dt * k2t, m, d, omega, lamR, theta_star)
    k4v, k4t = limit_rhs(v + dt * k3v, th + dt * k3t, m, d, omega, lamR, theta_star)
    v_out = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    th_out = th + (dt / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
    return v_out, th_out


@njit(cache=True, nogil=True)
def limit_run_to_section(v0, th0, target, m, d, omega, lamR, theta_star,
                         dt, max_steps):
    """Integrate the lifted limit system until the section ``th = target``.

    Accumulates the trapezoid quadrature of v^2 along the way.  Stops
    with LIMIT_STALLED the first time v <= 0 (locking basin) and with
    LIMIT_HORIZON if the step budget runs out; on a sign change of
    ``th - target`` the crossing is localized by fixed-depth bisection
    on the substep size, which makes the result bit-deterministic.

    Returns ``(status, t_cross, v_cross, vsq_integral)``.
    """
    v = v0
    th = th0
    t = 0.0
    integral = 0.0
    for _ in range(max_steps):
        v_new, th_new = limit_rk4_step(v, th, m, d, omega, lamR, theta_star, dt)
        if th_new >= target:
            lo = 0.0
            hi = dt
            v_hi = v_new
            th_hi = th_new
            for _ in range(_BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                if mid == lo or mid == hi:
                    break
                v_mid, th_mid = limit_rk4_step(v, th, m, d, omega, lamR, theta_star, mid)
                if th_mid >= target:
                    hi = mid
                    v_hi = v_mid
                    th_hi = th_mid
                else:
                    lo = mid
            integral += 0.5 * hi * (v * v + v_hi * v_hi)
            return LIMIT_CROSSED, t + hi, v_hi, integral
        if v_new <= 0.0:
            return LIMIT_STALLED, t + dt, v_new, integral
        integral += 0.5 * dt * (v * v + v_new * v_new)
        v = v_new
        th = th_new
        t += dt
    return LIMIT_HORIZON, t, v, integral
