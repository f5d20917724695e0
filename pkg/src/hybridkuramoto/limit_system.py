"""Single-oscillator reduction driven by a frozen order parameter.

When the order parameter of a full run converges to a constant
``R* e^{i Theta*}``, each oscillator asymptotically obeys the planar
autonomous system (written for an inertial oscillator)

    vdot  = (-d v + omega + lamR sin(Theta* - th)) / m,
    thdot = v,

with ``lamR = lam * R*``.  This module provides that vector field, its
equilibria on the circle, the divergence audit (the divergence is the
constant -d/m, which rules out contractible closed orbits), a
dissipation-tracking energy function on the lifted plane, and the
forward return map of the section ``th = th0 + 2*pi``:

* ``tau(v0)`` -- first hitting time of the section from ``(v0, th0)``;
* ``P(v0)`` -- velocity at that hit;
* the energy identity
  ``P^2 - v0^2 = 4*pi*omega/m - (2 d/m) int_0^tau v^2 dt``,
  whose numerical defect is reported per return;
* the exponential identity ``P = e^{(d/m) tau} v0``, whose defect is
  *reported but never asserted*: its textbook derivation differentiates
  the hitting time while holding the integrand's path fixed, so the
  artifact measures it across parameter sweeps instead of assuming it.

Trajectories that lose all forward velocity before reaching the section
belong to the locking basin and come back ``crossed = False``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .classifier import Tolerances, Verdict, detect_opss
from .integrator import Trajectory
from .model import FloatArray, ParameterError

__all__ = [
    "LimitParams",
    "PoincareResult",
    "AutonomyReport",
    "limit_vector_field",
    "equilibrium_angles",
    "limit_equilibria",
    "section_anchor",
    "divergence_check",
    "poincare_return",
    "lyapunov_value",
    "autonomy_audit",
]


@dataclass(frozen=True)
class LimitParams:
    """Parameters of the frozen-order-parameter single-oscillator flow."""

    m: float
    d: float
    omega: float
    lamR: float
    theta_star: float = 0.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.m) and self.m > 0):
            raise ParameterError(f"inertia m must be > 0, got {self.m!r}")
        if not (np.isfinite(self.d) and self.d > 0):
            raise ParameterError(f"damping d must be > 0, got {self.d!r}")
        if not np.isfinite(self.omega):
            raise ParameterError(f"omega must be finite, got {self.omega!r}")
        if not (np.isfinite(self.lamR) and self.lamR >= 0):
            raise ParameterError(f"lamR must be >= 0, got {self.lamR!r}")


@dataclass(frozen=True)
class PoincareResult:
    """One forward return (or capture) of the section ``th = th0 + 2*pi``."""

    v0: float
    crossed: bool
    tau: Optional[float] = None
    P: Optional[float] = None
    energy_residual: Optional[float] = None
    exp_identity_residual: Optional[float] = None
    capture_reason: Optional[str] = None

    def __post_init__(self) -> None:
        if self.crossed:
            if not (self.tau is not None and self.tau > 0):
                raise ParameterError("crossed result requires tau > 0")
            if not (self.P is not None and self.P > 0):
                raise ParameterError("crossed result requires P > 0")


def limit_vector_field(params: LimitParams, v: float, theta: float) -> tuple[float, float]:
    """Right-hand side ``(v_dot, theta_dot)`` of the reduced flow."""
    v_dot = (-params.d * v + params.omega
             + params.lamR * np.sin(params.theta_star - theta)) / params.m
    return float(v_dot), float(v)


def equilibrium_angles(omega: float, lamR: float, theta_star: float) -> FloatArray:
    """Angles in (-pi, pi] where the reduced forcing balances.

    Solves ``lamR sin(theta_star - th) = -omega`` on the circle: two
    angles above the threshold ``lamR > |omega|``, exactly one at
    equality, none below (drift regime).
    """
    if lamR < abs(omega):
        return np.empty(0)
    if lamR == 0.0:  # then omega == 0 too: every angle balances
        raise ParameterError(
            "degenerate reduced flow (lamR = omega = 0): the whole circle is "
            "stationary, there is no finite equilibrium list")
    ratio = np.clip(-omega / lamR, -1.0, 1.0)
    alpha = np.arcsin(ratio)
    cands = np.array([theta_star - alpha, theta_star - np.pi + alpha])
    cands = _principal(cands)
    if abs(abs(omega) - lamR) <= 1e-12 * max(1.0, lamR):
        return np.array([cands[0]])  # tangent case: both branches coincide
    return np.sort(cands)


def _principal(a):
    w = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def limit_equilibria(params: LimitParams) -> FloatArray:
    """Equilibrium angles of the reduced flow (with v = 0), 0, 1 or 2 of them."""
    return equilibrium_angles(params.omega, params.lamR, params.theta_star)


def section_anchor(params: LimitParams) -> float:
    """Section base angle: the balance angle on the cosine-nonnegative branch.

    Among the equilibrium angles, the one with
    ``cos(theta_star - th) >= 0`` is selected (ties broken toward the
    smaller principal angle); fixing the anchor makes return times
    reproducible.
    """
    angles = limit_equilibria(params)
    if angles.size == 0:
        raise ParameterError(
            "drift regime lamR < |omega|: the section construction needs a "
            "balance angle and does not apply")
    good = [th for th in np.atleast_1d(angles)
            if np.cos(params.theta_star - th) >= -1e-12]
    return float(min(good))


def divergence_check(params: LimitParams, sample_count: int = 100, *,
                     h: float = 1e-5, seed: int = 0) -> float:
    """Largest deviation of the finite-difference divergence from -d/m.

    Central differences at ``sample_count`` Philox-seeded random points;
    the planar divergence of the reduced field is the constant -d/m, so
    the deviation is pure finite-difference noise, O(h^2).
    """
    rng = np.random.Generator(np.random.Philox(seed))
    vs = rng.uniform(-3.0, 3.0, sample_count)
    ths = rng.uniform(-np.pi, np.pi, sample_count)
    target = -params.d / params.m
    worst = 0.0
    for v, th in zip(vs, ths):
        dfv = (limit_vector_field(params, v + h, th)[0]
               - limit_vector_field(params, v - h, th)[0]) / (2.0 * h)
        dft = (limit_vector_field(params, v, th + h)[1]
               - limit_vector_field(params, v, th - h)[1]) / (2.0 * h)
        worst = max(worst, abs(dfv + dft - target))
    return worst


def lyapunov_value(params: LimitParams, v: float, theta_lifted: float) -> float:
    """Energy-like function on the lifted plane, decreasing wherever v != 0.

    L = m v^2 / 2 - omega * th - lamR * cos(theta_star - th);
    along solutions dL/dt = -d v^2.
    """
    return float(0.5 * params.m * v * v - params.omega * theta_lifted
                 - params.lamR * np.cos(params.theta_star - theta_lifted))


def poincare_return(params: LimitParams, v0: float, *, dt: float = 1e-5,
                    max_time: float = 200.0) -> PoincareResult:
    """Forward return of the section ``th = th0 + 2*pi`` from ``(v0, th0)``.

    Integrates the lifted reduced flow with fixed-step RK4, accumulating
    the trapezoid quadrature of v^2; the crossing is localized by
    fixed-depth bisection inside the step containing it.  Fills the
    energy-identity defect and the exponential-identity defect (reported
    only; see the module docstring).  A vanishing forward velocity or an
    exhausted horizon yields ``crossed = False`` with the reason
    recorded.
    """
    if params.lamR < abs(params.omega):
        raise ParameterError(
            "drift regime lamR < |omega|: the return map is defined only when "
            "a balance angle exists; integrate the flow directly instead")
    if not v0 > 0:
        raise ParameterError(f"section start requires v0 > 0, got {v0!r}")
    if not (np.isfinite(dt) and dt > 0):
        raise ParameterError(f"dt must be > 0, got {dt!r}")
    th0 = float(np.mod(section_anchor(params), 2.0 * np.pi))
    target = th0 + 2.0 * np.pi
    max_steps = int(np.ceil(max_time / dt))
    status, t_end, v_end, integral = _kernels.limit_run_to_section(
        float(v0), th0, target, params.m, params.d, params.omega, params.lamR,
        params.theta_star, dt, max_steps)
    if status == _kernels.LIMIT_CROSSED and v_end > 0.0:
        tau = float(t_end)
        P = float(v_end)
        energy_residual = (P * P - v0 * v0) - (
            4.0 * np.pi * params.omega / params.m
            - (2.0 * params.d / params.m) * integral)
        exp_identity_residual = P - float(np.exp((params.d / params.m) * tau)) * v0
        return PoincareResult(v0=float(v0), crossed=True, tau=tau, P=P,
                              energy_residual=float(energy_residual),
                              exp_identity_residual=float(exp_identity_residual))
    reason = "stalled" if status != _kernels.LIMIT_HORIZON else "horizon"
    return PoincareResult(v0=float(v0), crossed=False, capture_reason=reason)


@dataclass(frozen=True)
class AutonomyReport:
    """How closely a full run shadows its frozen-order-parameter limit."""

    applicable: bool
    oscillator: int
    R_star: Optional[float] = None
    Theta_star: Optional[float] = None
    tail_deviation: Optional[float] = None
    equilibrium_distance: Optional[float] = None
    equilibrium_angles: Optional[tuple[float, ...]] = None

    def to_json_dict(self) -> dict:
        return {
            "applicable": self.applicable,
            "oscillator": self.oscillator,
            "R_star": self.R_star,
            "Theta_star": self.Theta_star,
            "tail_deviation": self.tail_deviation,
            "equilibrium_distance": self.equilibrium_distance,
            "equilibrium_angles": (list(self.equilibrium_angles)
                                   if self.equilibrium_angles is not None else None),
        }


def autonomy_audit(trajectory: Trajectory, oscillator_index: int,
                   tol: Optional[Tolerances] = None) -> AutonomyReport:
    """Check that a converged run lands on its limit system's equilibria.

    Requires a trajectory whose order parameter has converged (the
    order-parameter detector must return true; otherwise the report is
    not applicable).  Fits ``R*``/``Theta*`` as tail means, reports the
    tail supremum of ``|R - R*| + |Theta - Theta*|``, and measures the
    distance of the oscillator's final ``(speed, phase mod 2*pi)`` to
    the nearest equilibrium of the reduced flow in the product metric
    ``|v| + circle distance``.
    """
    tol = tol or Tolerances()
    ens = trajectory.ensemble
    if not 0 <= oscillator_index < ens.N:
        raise ParameterError(f"oscillator_index out of range 0..{ens.N - 1}")
    if detect_opss(trajectory, tol) is not Verdict.TRUE:
        return AutonomyReport(applicable=False, oscillator=oscillator_index)
    i0 = int(np.searchsorted(
        trajectory.t, trajectory.t[-1] - tol.tail_fraction * (trajectory.t[-1] - trajectory.t[0])))
    i0 = min(i0, len(trajectory) - 2) if len(trajectory) > 1 else 0
    R_star = float(trajectory.R[i0:].mean())
    Theta_star = float(trajectory.Theta[i0:].mean())
    tail_dev = float((np.abs(trajectory.R[i0:] - R_star)
                      + np.abs(trajectory.Theta[i0:] - Theta_star)).max())
    lamR = ens.lam * R_star
    j = oscillator_index
    freqs = trajectory.frequencies()
    v_final = float(freqs[-1, j])
    th_final = float(trajectory.theta[-1, j])
    if lamR == 0.0 and ens.omega[j] == 0.0:
        # whole-circle degeneracy: only the speed distinguishes the state
        return AutonomyReport(applicable=True, oscillator=j, R_star=R_star,
                              Theta_star=Theta_star, tail_deviation=tail_dev,
                              equilibrium_distance=abs(v_final),
                              equilibrium_angles=None)
    angles = equilibrium_angles(float(ens.omega[j]), lamR, Theta_star)
    if angles.size == 0:
        return AutonomyReport(applicable=True, oscillator=j, R_star=R_star,
                              Theta_star=Theta_star, tail_deviation=tail_dev,
                              equilibrium_distance=float("inf"),
                              equilibrium_angles=())
    circ = np.abs(_principal(th_final - angles))
    dist = float(abs(v_final) + circ.min())
    return AutonomyReport(applicable=True, oscillator=j, R_star=R_star,
                          Theta_star=Theta_star, tail_deviation=tail_dev,
                          equilibrium_distance=dist,
                          equilibrium_angles=tuple(float(a) for a in np.atleast_1d(angles)))
