"""Hybrid first/second-order all-to-all Kuramoto ensemble.

The ensemble couples ``n`` first-order (overdamped) oscillators with
``N - n`` second-order (inertial) oscillators through a homogeneous
all-to-all sine interaction:

    d_j thdot_j                 = omega_j + (lam/N) sum_k sin(th_k - th_j),   j <= n
    m_j thddot_j + d_j thdot_j  = omega_j + (lam/N) sum_k sin(th_k - th_j),   j > n

Phases are stored *lifted* on the real line, never reduced mod 2*pi:
boundedness of phase differences and the conserved weighted phase sum

    M = sum_j d_j th_j + sum_{j>n} m_j v_j

are directly observable on lifted trajectories.  Reduction mod 2*pi is
always a view, never state.

All operations here are pure functions of immutable value objects and
are safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]

__all__ = [
    "ParameterError",
    "Ensemble",
    "State",
    "normalize_frame",
    "vector_field",
    "instantaneous_frequencies",
    "stationarity_residual",
    "momentum",
    "momentum_series",
]


class ParameterError(ValueError):
    """Invalid ensemble/state/config parameters."""


def _readonly(a: Iterable[float]) -> FloatArray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Ensemble:
    """Parameter set of one hybrid ensemble.

    Index convention: oscillators ``1..n`` (0-based ``0..n-1``) are
    first-order and carry ``m_j = 0`` exactly; oscillators ``n+1..N``
    are inertial with ``m_j > 0``.  Both degenerate ends are first
    class: ``n = N`` (purely first order) and ``n = 0`` (purely second
    order).

    ``omega_max`` caches ``max_j |omega_j|`` at construction.
    """

    N: int
    n: int
    m: FloatArray
    d: FloatArray
    omega: FloatArray
    lam: float
    omega_max: float = field(init=False)

    def __post_init__(self) -> None:
        if not isinstance(self.N, (int, np.integer)) or self.N < 1:
            raise ParameterError(f"N must be a positive integer, got {self.N!r}")
        if not isinstance(self.n, (int, np.integer)) or not 0 <= self.n <= self.N:
            raise ParameterError(f"n must lie in 0..N={self.N}, got {self.n!r}")
        m = _readonly(self.m)
        d = _readonly(self.d)
        omega = _readonly(self.omega)
        for name, arr in (("m", m), ("d", d), ("omega", omega)):
            if arr.shape != (self.N,):
                raise ParameterError(f"{name} must have length N={self.N}, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ParameterError(f"{name} contains non-finite entries")
        if np.any(m[: self.n] != 0.0):
            raise ParameterError("m_j must be exactly 0 for first-order oscillators (j <= n)")
        if np.any(m[self.n:] <= 0.0):
            raise ParameterError("m_j must be > 0 for inertial oscillators (j > n)")
        if np.any(d <= 0.0):
            raise ParameterError("all dampings d_j must be > 0")
        if not (np.isfinite(self.lam) and self.lam > 0.0):
            raise ParameterError(f"coupling lam must be > 0, got {self.lam!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "omega_max", float(np.max(np.abs(omega))))

    @property
    def n_inertial(self) -> int:
        return self.N - self.n

    def is_normalized(self, tol: float = 1e-9) -> bool:
        """True when the weighted frequency sum vanishes to round-off."""
        return abs(float(self.omega.sum())) <= tol * max(1.0, self.omega_max) * self.N

    def to_json_dict(self) -> dict:
        return {
            "N": self.N,
            "n": self.n,
            "m": self.m.tolist(),
            "d": self.d.tolist(),
            "omega": self.omega.tolist(),
            "lambda": self.lam,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Ensemble":
        required = {"N", "n", "m", "d", "omega", "lambda"}
        keys = set(data)
        if keys != required:
            missing = sorted(required - keys)
            unknown = sorted(keys - required)
            parts = []
            if missing:
                parts.append(f"missing keys {missing}")
            if unknown:
                parts.append(f"unknown keys {unknown}")
            raise ParameterError("ensemble object: " + ", ".join(parts))
        for key in ("N", "n"):
            val = data[key]
            if not (isinstance(val, int) and not isinstance(val, bool)):
                raise ParameterError(f"ensemble object: {key} must be an integer, "
                                     f"got {val!r}")
        return cls(
            N=int(data["N"]),
            n=int(data["n"]),
            m=np.asarray(data["m"], dtype=np.float64),
            d=np.asarray(data["d"], dtype=np.float64),
            omega=np.asarray(data["omega"], dtype=np.float64),
            lam=float(data["lambda"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> "Ensemble":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class State:
    """Lifted phases and inertial velocities at one instant.

    ``theta`` has length N (real, radians, not reduced mod 2*pi);
    ``v`` has length ``N - n`` and holds velocities of oscillators
    ``n+1..N`` only.  First-order oscillators have no stored velocity;
    their instantaneous frequency is the right-hand side divided by
    ``d_j`` (see :func:`instantaneous_frequencies`).
    """

    t: float
    theta: FloatArray
    v: FloatArray

    def __post_init__(self) -> None:
        theta = _readonly(self.theta)
        v = _readonly(self.v)
        if not np.isfinite(self.t):
            raise ParameterError(f"time must be finite, got {self.t!r}")
        if theta.ndim != 1 or v.ndim != 1:
            raise ParameterError("theta and v must be one-dimensional")
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(v))):
            raise ParameterError("state contains non-finite entries")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "v", v)


def _check_dims(ensemble: Ensemble, state: State) -> None:
    if state.theta.shape != (ensemble.N,):
        raise ParameterError(
            f"state.theta has shape {state.theta.shape}, expected ({ensemble.N},)")
    if state.v.shape != (ensemble.n_inertial,):
        raise ParameterError(
            f"state.v has shape {state.v.shape}, expected ({ensemble.n_inertial},)")


def normalize_frame(ensemble: Ensemble) -> tuple[Ensemble, float]:
    """Move to the co-rotating frame that removes the collective drift.

    Replaces ``omega_j`` by ``omega_j - d_j * (sum omega)/(sum d)`` and
    returns ``(normalized_ensemble, drift_rate)`` with
    ``drift_rate = (sum omega)/(sum d)``.  The caller owns the matching
    change of variables ``th_j(t) -> th_j(t) - drift_rate * t`` (and the
    corresponding frequency shift), which is why the drift rate is
    reported instead of silently applied.

    Idempotent: normalizing twice equals normalizing once.
    """
    drift = float(ensemble.omega.sum() / ensemble.d.sum())
    omega = ensemble.omega - drift * ensemble.d
    # exact-zero the residual round-off so repeated application is stable
    omega = omega - ensemble.d * (omega.sum() / ensemble.d.sum())
    out = Ensemble(N=ensemble.N, n=ensemble.n, m=ensemble.m, d=ensemble.d,
                   omega=omega, lam=ensemble.lam)
    return out, drift


def _coupling(theta: FloatArray, lam: float) -> FloatArray:
    """(lam/N) sum_k sin(th_k - th_j) for every j (direct pairwise sum)."""
    N = theta.shape[-1]
    if theta.ndim == 2 and theta.shape[0] * N * N > 20_000_000:
        chunk = max(1, 20_000_000 // (N * N))
        return np.concatenate([_coupling(theta[i:i + chunk], lam)
                               for i in range(0, theta.shape[0], chunk)])
    diff = theta[..., None, :] - theta[..., :, None]
    return (lam / N) * np.sin(diff).sum(axis=-1)


def vector_field(ensemble: Ensemble, state: State) -> tuple[FloatArray, FloatArray]:
    """Right-hand side of the hybrid flow at ``state``.

    Returns ``(theta_dot, v_dot)`` with ``theta_dot`` of length N and
    ``v_dot`` of length ``N - n``.  For j <= n the phase velocity is the
    forcing divided by ``d_j``; for j > n it is the stored velocity and
    the acceleration is ``(forcing - d_j v_j)/m_j``.
    """
    _check_dims(ensemble, state)
    g = ensemble.omega + _coupling(state.theta, ensemble.lam)
    n = ensemble.n
    theta_dot = np.empty(ensemble.N)
    theta_dot[:n] = g[:n] / ensemble.d[:n]
    theta_dot[n:] = state.v
    v_dot = (g[n:] - ensemble.d[n:] * state.v) / ensemble.m[n:]
    return theta_dot, v_dot


def instantaneous_frequencies(ensemble: Ensemble, theta: FloatArray,
                              v: FloatArray) -> FloatArray:
    """Phase velocities thdot_j, broadcast over leading sample axes.

    ``theta`` may be ``(N,)`` or ``(ns, N)``; ``v`` must match with
    trailing dimension ``N - n``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    g = ensemble.omega + _coupling(theta, ensemble.lam)
    n = ensemble.n
    out = np.empty(theta.shape)
    out[..., :n] = g[..., :n] / ensemble.d[:n]
    out[..., n:] = v
    return out


def stationarity_residual(ensemble: Ensemble, theta: FloatArray) -> FloatArray:
    """Forcing residual of the stationary equations at configuration ``theta``.

    A configuration is a phase-locked equilibrium of the normalized
    ensemble iff every entry vanishes.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape[-1] != ensemble.N:
        raise ParameterError(
            f"theta has trailing dimension {theta.shape[-1]}, expected {ensemble.N}")
    return ensemble.omega + _coupling(theta, ensemble.lam)


def momentum(ensemble: Ensemble, state: State) -> float:
    """Conserved weighted phase sum M = sum d_j th_j + sum_{j>n} m_j v_j.

    Constant along exact solutions of the normalized flow: the coupling
    is antisymmetric under j <-> k and the normalized frequencies sum to
    zero, so dM/dt vanishes identically.  M equals the initial value
    ``sum d_j th_j(0) + sum m_j thdot_j(0)``.
    """
    _check_dims(ensemble, state)
    return float(momentum_series(ensemble, state.theta, state.v))


def momentum_series(ensemble: Ensemble, theta: FloatArray, v: FloatArray) -> FloatArray:
    """Vectorized momentum over leading sample axes."""
    theta = np.asarray(theta, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    out = theta @ ensemble.d
    if ensemble.n_inertial > 0:
        out = out + v @ ensemble.m[ensemble.n:]
    return out
