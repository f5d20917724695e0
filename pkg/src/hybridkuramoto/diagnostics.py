"""Order parameter, phase statistics, and the conservation-law audits.

The complex order parameter of a phase configuration is

    Z = R e^{i Theta} = (1/N) sum_j e^{i th_j},

with R in [0, 1] measuring coherence and Theta the mean phase.  Theta is
only defined up to 2*pi per sample; :func:`unwrap_angles` turns a sampled
series of principal angles into a continuous real-valued function.

Three verification tools accompany the simulator:

* :func:`energy_ledger` balances kinetic energy, dissipated power and the
  work done by frequencies/coupling along a sampled trajectory; its
  residual vanishes for the exact flow and shrinks O(dt^2) with the
  trapezoid quadrature used for the dissipation integral.
* :func:`velocity_envelope_check` compares every sampled phase velocity
  against its analytic bound: |thdot_j| <= (|omega_j| + lam)/d_j for
  first-order oscillators, and the exponential relaxation envelope
  |v_j(0)| e^{-d_j t/m_j} + ((|omega_j| + lam)/d_j)(1 - e^{-d_j t/m_j})
  for inertial ones.
* :func:`landau_kolmogorov_check` verifies the interpolation inequality
  ||f'|| <= 2 ||f||^(1/2) ||f''||^(1/2) on uniformly sampled data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np

from .model import Ensemble, FloatArray, ParameterError, instantaneous_frequencies

if TYPE_CHECKING:  # pragma: no cover
    from .integrator import Trajectory

__all__ = [
    "OrderParameterSample",
    "order_parameter",
    "unwrap_angles",
    "phase_diameter",
    "energy_ledger",
    "LandauKolmogorovReport",
    "landau_kolmogorov_check",
    "velocity_envelope_check",
    "velocity_envelope_report",
    "diagnostics_report",
    "UNWRAP_R_FLOOR",
]

# Below this order-parameter magnitude the mean phase is ill-defined and
# the unwrapped angle is held at its previous value.
UNWRAP_R_FLOOR = 1e-8


@dataclass(frozen=True)
class OrderParameterSample:
    """One order-parameter reading: magnitude, angle, Cartesian parts."""

    R: float
    Theta: float
    Z_re: float
    Z_im: float

    @classmethod
    def from_phases(cls, theta: FloatArray) -> "OrderParameterSample":
        z = np.exp(1j * np.asarray(theta, dtype=np.float64)).mean()
        return cls(R=float(np.abs(z)), Theta=float(np.angle(z)),
                   Z_re=float(z.real), Z_im=float(z.imag))


def order_parameter(theta: FloatArray) -> OrderParameterSample:
    """Centroid of the unit-circle positions of ``theta``.

    ``Theta`` is the principal angle in (-pi, pi]; continuous unwrapping
    is applied at series level by :func:`unwrap_angles`.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.shape[0] < 1:
        raise ParameterError("order_parameter expects a non-empty 1-D phase vector")
    return OrderParameterSample.from_phases(theta)


def _wrap_diff(d: FloatArray) -> FloatArray:
    """Wrap differences into (-pi, pi]."""
    w = np.mod(d + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def unwrap_angles(angles: FloatArray, R: Optional[FloatArray] = None,
                  r_floor: float = UNWRAP_R_FLOOR) -> FloatArray:
    """Continuous lift of a sampled principal-angle series.

    Adds 2*pi multiples so consecutive differences lie in (-pi, pi]; the
    first value is placed in [0, 2*pi).  When the magnitudes ``R`` are
    given, samples with R below ``r_floor`` (angle ill-defined) are held
    at the previous value and skipped when differencing.
    """
    a = np.asarray(angles, dtype=np.float64)
    if a.size == 0:
        return a.copy()
    if R is None:
        valid = np.ones(a.shape, dtype=bool)
    else:
        valid = np.asarray(R, dtype=np.float64) >= r_floor
    out = np.empty_like(a)
    out[0] = np.mod(a[0], 2.0 * np.pi)
    last_raw = a[0]
    for i in range(1, a.shape[0]):
        if not valid[i]:
            out[i] = out[i - 1]
            continue
        d = float(_wrap_diff(np.array(a[i] - last_raw)))
        out[i] = out[i - 1] + d
        last_raw = a[i]
    return out


def phase_diameter(theta: FloatArray) -> float:
    """Spread max_j th_j - min_j th_j of a lifted configuration."""
    theta = np.asarray(theta, dtype=np.float64)
    return float(theta.max() - theta.min())


def energy_ledger(trajectory: "Trajectory") -> FloatArray:
    """Residual of the energy balance at every sample.

    At sample time t the balance reads

        [ sum_j m_j v_j(t)^2 / 2  +  int_0^t sum_j d_j thdot_j^2 ds ]
      - [ sum_j m_j v_j(0)^2 / 2  +  sum_j omega_j (th_j(t) - th_j(0))
          + (lam/N) sum_{j<k} ( cos(th_k - th_j) |_0^t ) ]

    and vanishes identically along the exact flow.  The dissipation
    integral is accumulated by the trapezoid rule on the trajectory
    samples, which keeps the ledger integrator-agnostic; the residual is
    exactly 0 at t = 0 and scales O(dt^2) with the sampling step.
    """
    ens = trajectory.ensemble
    t = trajectory.t
    theta = trajectory.theta
    v = trajectory.v
    thdot = instantaneous_frequencies(ens, theta, v)
    power = (thdot ** 2) @ ens.d
    integral = np.zeros(t.shape[0])
    if t.shape[0] > 1:
        integral[1:] = np.cumsum(0.5 * (power[1:] + power[:-1]) * np.diff(t))
    if ens.n_inertial > 0:
        kinetic = 0.5 * (v ** 2) @ ens.m[ens.n:]
    else:
        kinetic = np.zeros(t.shape[0])
    source = (theta - theta[0]) @ ens.omega
    # sum_{j<k} cos(th_k - th_j) = (|sum_j e^{i th_j}|^2 - N) / 2
    zsum = np.exp(1j * theta).sum(axis=1)
    paircos = 0.5 * (np.abs(zsum) ** 2 - ens.N)
    return (kinetic + integral) - (kinetic[0] + source
                                   + (ens.lam / ens.N) * (paircos - paircos[0]))


@dataclass(frozen=True)
class LandauKolmogorovReport:
    sup_f: float
    sup_df: float
    sup_d2f: float
    satisfied: bool
    slack: float


def landau_kolmogorov_check(f_samples: FloatArray, h: float) -> LandauKolmogorovReport:
    """Sampled check of ||f'|| <= 2 ||f||^(1/2) ||f''||^(1/2).

    Derivatives are estimated by central differences on the uniform grid
    with spacing ``h``; each sup estimate is granted a slack of 10*h^2
    before the inequality is evaluated.
    """
    f = np.asarray(f_samples, dtype=np.float64)
    if f.ndim != 1 or f.shape[0] < 5:
        raise ParameterError("landau_kolmogorov_check needs at least 5 samples")
    if not (np.isfinite(h) and h > 0):
        raise ParameterError(f"spacing h must be > 0, got {h!r}")
    df = (f[2:] - f[:-2]) / (2.0 * h)
    d2f = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / (h * h)
    sup_f = float(np.abs(f).max())
    sup_df = float(np.abs(df).max())
    sup_d2f = float(np.abs(d2f).max())
    slack = 10.0 * h * h
    satisfied = (sup_df - slack) <= 2.0 * np.sqrt((sup_f + slack) * (sup_d2f + slack))
    return LandauKolmogorovReport(sup_f=sup_f, sup_df=sup_df, sup_d2f=sup_d2f,
                                  satisfied=bool(satisfied), slack=slack)


def _envelope(ensemble: Ensemble, t: FloatArray, v0: FloatArray) -> FloatArray:
    """Velocity bound for inertial oscillators, saturation level (|w|+lam)/d."""
    n = ensemble.n
    m = ensemble.m[n:]
    d = ensemble.d[n:]
    sat = (np.abs(ensemble.omega[n:]) + ensemble.lam) / d
    decay = np.exp(-np.outer(t, d / m))
    return np.abs(v0) * decay + sat * (1.0 - decay)


def velocity_envelope_check(ensemble: Ensemble, trajectory: "Trajectory") -> FloatArray:
    """Worst excess of each oscillator's speed over its analytic bound.

    Returns, per oscillator, ``max_t (observed - bound)``; values <= 0
    mean the bound holds at every sample.  First-order oscillators are
    bounded by the constant (|omega_j| + lam)/d_j; inertial ones by the
    exponential relaxation envelope with the same saturation level.
    """
    n = ensemble.n
    t = trajectory.t
    worst = np.empty(ensemble.N)
    if n > 0:
        thdot = instantaneous_frequencies(ensemble, trajectory.theta, trajectory.v)[:, :n]
        bound = (np.abs(ensemble.omega[:n]) + ensemble.lam) / ensemble.d[:n]
        worst[:n] = (np.abs(thdot) - bound).max(axis=0)
    if ensemble.n_inertial > 0:
        bound = _envelope(ensemble, t - t[0], trajectory.v[0])
        worst[n:] = (np.abs(trajectory.v) - bound).max(axis=0)
    return worst


def velocity_envelope_report(ensemble: Ensemble, trajectory: "Trajectory") -> dict:
    """Envelope audit plus both candidate saturation levels.

    The relaxation envelope saturates at (|omega_j| + lam)/d_j (the level
    the variation-of-constants solution actually reaches); the level
    (|omega_j| + lam)/m_j is reported alongside for comparison, not
    enforced.
    """
    n = ensemble.n
    worst = velocity_envelope_check(ensemble, trajectory)
    sat_d = ((np.abs(ensemble.omega) + ensemble.lam) / ensemble.d).tolist()
    sat_m = [None] * n + ((np.abs(ensemble.omega[n:]) + ensemble.lam)
                          / ensemble.m[n:]).tolist()
    return {
        "worst_violation": worst.tolist(),
        "max_violation": float(worst.max()),
        "saturation_over_damping": sat_d,
        "saturation_over_inertia": sat_m,
    }


def diagnostics_report(trajectory: "Trajectory") -> dict:
    """Summary block for a finished run (JSON-ready).

    The interpolation-inequality check runs on each oscillator's sampled
    frequency series (so sup_f is the largest speed, sup_df the largest
    acceleration estimate); the reported block is the one with the
    smallest margin.
    """
    ens = trajectory.ensemble
    diam = np.max(trajectory.theta, axis=1) - np.min(trajectory.theta, axis=1)
    worst = velocity_envelope_check(ens, trajectory)
    lk_block = None
    if len(trajectory) >= 5 and len(trajectory) > 1:
        h = float(trajectory.t[1] - trajectory.t[0])
        thdot = instantaneous_frequencies(ens, trajectory.theta, trajectory.v)
        margin = None
        for j in range(ens.N):
            rep = landau_kolmogorov_check(thdot[:, j], h)
            rhs = 2.0 * np.sqrt(max(rep.sup_f, 0.0) * max(rep.sup_d2f, 0.0))
            m = rhs - rep.sup_df
            if margin is None or m < margin:
                margin = m
                lk_block = {
                    "oscillator": j + 1,
                    "sup_f": rep.sup_f,
                    "sup_df": rep.sup_df,
                    "sup_d2f": rep.sup_d2f,
                    "satisfied": rep.satisfied,
                }
    return {
        "R_final": float(trajectory.R[-1]),
        "Theta_final": float(trajectory.Theta[-1]),
        "max_phase_diameter": float(diam.max()),
        "max_energy_residual": float(np.abs(trajectory.energy_residual).max()),
        "apriori_worst": float(worst.max()),
        "lk": lk_block,
    }
