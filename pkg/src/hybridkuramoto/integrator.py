"""Time integration of the hybrid flow and section-crossing localization.

The default method is classical fixed-step RK4 (``rk4_fixed``): the flow
is non-stiff for moderate damping-to-inertia ratios and a fixed step
keeps runs bit-reproducible.  An embedded Dormand-Prince 4(5) pair
(``rk45_adaptive``) is available for ensembles with very small inertias,
where the velocity relaxation becomes fast.

Random initial conditions draw phases uniformly on [0, 2*pi) and then
inertial velocities uniformly on [-1, 1], in that order, from numpy's
Philox counter-based generator (Philox 4x64 with 10 rounds) keyed by the
config seed, so runs are reproducible across machines.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np

from . import _kernels, diagnostics
from .model import (
    Ensemble,
    FloatArray,
    ParameterError,
    State,
    momentum_series,
)

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "IntegrationError",
    "CrossingResult",
    "random_initial_state",
    "step",
    "integrate",
    "locate_crossing",
]

_METHODS = ("rk4_fixed", "rk45_adaptive")


class IntegrationError(RuntimeError):
    """Numerical blow-up while advancing the flow.

    The exact flow is globally bounded in velocity, so a non-finite state
    always signals an integration fault (step too large), never true
    finite-time blow-up.  ``t_fail`` holds the offending time and
    ``trajectory`` the samples collected up to the last good one.
    """

    def __init__(self, message: str, t_fail: float,
                 trajectory: Optional["Trajectory"] = None) -> None:
        super().__init__(message)
        self.t_fail = t_fail
        self.trajectory = trajectory


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    T: float = 100.0
    sample_every: int = 1
    method: str = "rk4_fixed"
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    seed: int = 0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ParameterError(f"dt must be > 0, got {self.dt!r}")
        if not (np.isfinite(self.T) and self.T >= 0):
            raise ParameterError(f"T must be >= 0, got {self.T!r}")
        if not (isinstance(self.sample_every, (int, np.integer)) and self.sample_every >= 1):
            raise ParameterError(f"sample_every must be an integer >= 1, got {self.sample_every!r}")
        if self.method not in _METHODS:
            raise ParameterError(f"method must be one of {_METHODS}, got {self.method!r}")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ParameterError("abs_tol and rel_tol must be > 0")
        if not (isinstance(self.seed, (int, np.integer)) and self.seed >= 0):
            raise ParameterError(f"seed must be a non-negative integer, got {self.seed!r}")


@dataclass
class Trajectory:
    """Sampled run: states plus per-sample diagnostics columns.

    ``theta`` is (ns, N) lifted phases, ``v`` is (ns, N - n) inertial
    velocities.  ``R``/``Theta`` are the order-parameter magnitude and
    the continuously unwrapped mean phase, ``M`` the conserved weighted
    phase sum and ``energy_residual`` the running defect of the energy
    balance (see :func:`hybridkuramoto.diagnostics.energy_ledger`).
    """

    ensemble: Ensemble
    config: IntegratorConfig
    t: FloatArray
    theta: FloatArray
    v: FloatArray
    R: FloatArray
    Theta: FloatArray
    M: FloatArray
    energy_residual: FloatArray
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.shape[0]

    def state(self, i: int) -> State:
        return State(t=float(self.t[i]), theta=self.theta[i], v=self.v[i])

    @property
    def final_state(self) -> State:
        return self.state(len(self) - 1)

    def sample(self, i: int) -> tuple[State, diagnostics.OrderParameterSample, float, float]:
        ops = diagnostics.OrderParameterSample.from_phases(self.theta[i])
        ops = diagnostics.OrderParameterSample(
            R=ops.R, Theta=float(self.Theta[i]), Z_re=ops.Z_re, Z_im=ops.Z_im)
        return self.state(i), ops, float(self.M[i]), float(self.energy_residual[i])

    def samples(self) -> Iterator[tuple[State, diagnostics.OrderParameterSample, float, float]]:
        for i in range(len(self)):
            yield self.sample(i)

    def frequencies(self) -> FloatArray:
        """Instantaneous phase velocities at every sample, shape (ns, N)."""
        from .model import instantaneous_frequencies
        return instantaneous_frequencies(self.ensemble, self.theta, self.v)

    def csv_header(self) -> str:
        ens = self.ensemble
        cols = ["t"]
        cols += [f"theta_{j + 1}" for j in range(ens.N)]
        cols += [f"v_{j + 1}" for j in range(ens.n, ens.N)]
        cols += ["R", "Theta", "M", "E_residual"]
        return ",".join(cols)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.csv_header() + "\n")
            for i in range(len(self)):
                row = [self.t[i], *self.theta[i], *self.v[i],
                       self.R[i], self.Theta[i], self.M[i], self.energy_residual[i]]
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")

    @classmethod
    def from_csv(cls, ensemble: Ensemble, path,
                 config: Optional[IntegratorConfig] = None) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        n_theta = sum(1 for h in header if h.startswith("theta_"))
        n_v = sum(1 for h in header if h.startswith("v_"))
        if n_theta != ensemble.N or n_v != ensemble.n_inertial:
            raise ParameterError(
                f"trajectory file has N={n_theta}, N-n={n_v}; "
                f"ensemble expects N={ensemble.N}, N-n={ensemble.n_inertial}")
        t = data[:, 0]
        theta = data[:, 1:1 + n_theta]
        v = data[:, 1 + n_theta:1 + n_theta + n_v]
        if config is None:
            dt = float(t[1] - t[0]) if len(t) > 1 else 1e-3
            config = IntegratorConfig(dt=dt, T=float(t[-1]) if t[-1] > 0 else dt)
        return _build_trajectory(ensemble, config, t, theta, v, {"source": str(path)})


def random_initial_state(ensemble: Ensemble, seed: int) -> State:
    """Random start: phases U[0, 2*pi), then inertial velocities U[-1, 1].

    Uses ``numpy.random.Philox`` (counter-based, 64-bit) keyed by
    ``seed``; the draw order above is part of the reproducibility
    contract.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    theta = rng.uniform(0.0, 2.0 * np.pi, ensemble.N)
    v = rng.uniform(-1.0, 1.0, ensemble.n_inertial)
    return State(t=0.0, theta=theta, v=v)


def step(ensemble: Ensemble, state: State, dt: float) -> State:
    """One fixed RK4 step of the combined first/second-order system.

    The mixed system is advanced as a single ODE of dimension
    ``N + (N - n)``.
    """
    if not (np.isfinite(dt) and dt > 0):
        raise ParameterError(f"dt must be > 0, got {dt!r}")
    if state.theta.shape != (ensemble.N,) or state.v.shape != (ensemble.n_inertial,):
        raise ParameterError("state dimensions do not match ensemble")
    theta, v = _kernels.full_rk4_step(
        state.theta, state.v, ensemble.m, ensemble.d, ensemble.omega,
        ensemble.lam, ensemble.n, dt)
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(v))):
        raise IntegrationError(f"non-finite state after step at t={state.t + dt}",
                               t_fail=state.t + dt)
    return State(t=state.t + dt, theta=theta, v=v)


def _require_normalized(ensemble: Ensemble) -> None:
    if not ensemble.is_normalized():
        raise ParameterError(
            "ensemble is not frame-normalized (weighted frequency sum is nonzero); "
            "apply normalize_frame first")


def _build_trajectory(ensemble: Ensemble, config: IntegratorConfig,
                      t: FloatArray, theta: FloatArray, v: FloatArray,
                      metadata: dict) -> Trajectory:
    z = np.exp(1j * theta).mean(axis=1)
    R = np.abs(z)
    Theta = diagnostics.unwrap_angles(np.angle(z), R=R)
    M = momentum_series(ensemble, theta, v)
    traj = Trajectory(ensemble=ensemble, config=config, t=t, theta=theta, v=v,
                      R=R, Theta=Theta, M=M,
                      energy_residual=np.zeros(t.shape[0]), metadata=metadata)
    # pre-fault samples can be finite yet huge; let the ledger report inf there
    with np.errstate(over="ignore", invalid="ignore"):
        traj.energy_residual = diagnostics.energy_ledger(traj)
    return traj


def integrate(ensemble: Ensemble, initial: State, config: IntegratorConfig) -> Trajectory:
    """Advance the normalized ensemble to ``config.T``, sampling on the way.

    Every sample carries the order parameter (R, unwrapped Theta), the
    conserved weighted phase sum M and the running energy-balance
    residual.  Raises :class:`IntegrationError` on numerical blow-up,
    with the samples up to the last good one attached.
    """
    _require_normalized(ensemble)
    if initial.theta.shape != (ensemble.N,) or initial.v.shape != (ensemble.n_inertial,):
        raise ParameterError("initial state dimensions do not match ensemble")
    wall0 = time.perf_counter()
    if config.method == "rk4_fixed":
        t, theta, v, fault_step = _run_rk4(ensemble, initial, config)
    else:
        t, theta, v, fault_step = _run_rk45(ensemble, initial, config)
    meta = {
        "method": config.method,
        "dt": config.dt,
        "T": config.T,
        "sample_every": config.sample_every,
        "seed": config.seed,
        "wall_clock_s": time.perf_counter() - wall0,
    }
    traj = _build_trajectory(ensemble, config, t, theta, v, meta)
    if fault_step is not None:
        raise IntegrationError(
            f"non-finite state at t={fault_step * config.dt:.6g}; "
            "reduce dt or switch to rk45_adaptive",
            t_fail=fault_step * config.dt, trajectory=traj)
    return traj


def _run_rk4(ensemble: Ensemble, initial: State, config: IntegratorConfig):
    n_steps = int(round(config.T / config.dt))
    se = config.sample_every
    n_samples = n_steps // se + 1
    out_theta = np.empty((n_samples, ensemble.N))
    out_v = np.empty((n_samples, ensemble.n_inertial))
    written, status, fault = _kernels.full_rk4_sampled(
        initial.theta, initial.v, ensemble.m, ensemble.d, ensemble.omega,
        ensemble.lam, ensemble.n, config.dt, n_steps, se, out_theta, out_v)
    t = initial.t + config.dt * se * np.arange(written, dtype=np.float64)
    fault_step = fault if status == _kernels.STATUS_NONFINITE else None
    return t, out_theta[:written], out_v[:written], fault_step


def _run_rk45(ensemble: Ensemble, initial: State, config: IntegratorConfig):
    t_list = [initial.t]
    theta_list = [np.array(initial.theta)]
    v_list = [np.array(initial.v)]
    theta = np.array(initial.theta)
    v = np.array(initial.v)
    t = 0.0
    h = config.dt
    accepted = 0
    fault_step = None
    while t < config.T - 1e-12 * max(1.0, config.T):
        h = min(h, config.T - t)
        theta_new, v_new, err = _kernels.full_dp45_step(
            theta, v, ensemble.m, ensemble.d, ensemble.omega, ensemble.lam,
            ensemble.n, h, config.abs_tol, config.rel_tol)
        if not (np.all(np.isfinite(theta_new)) and np.all(np.isfinite(v_new))):
            fault_step = (t + h) / config.dt
            break
        if err <= 1.0:
            t += h
            theta, v = theta_new, v_new
            accepted += 1
            if accepted % config.sample_every == 0 or t >= config.T - 1e-12:
                t_list.append(initial.t + t)
                theta_list.append(theta)
                v_list.append(v)
            factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        else:
            factor = max(0.2, 0.9 * err ** -0.2)
        h *= factor
    t_arr = np.array(t_list)
    keep = np.concatenate(([True], np.diff(t_arr) > 0))  # drop duplicate final sample
    return (t_arr[keep], np.array(theta_list)[keep], np.array(v_list)[keep], fault_step)


@dataclass(frozen=True)
class CrossingResult:
    found: bool
    t_cross: Optional[float]
    state: Optional[State]


def locate_crossing(field: Union[Ensemble, "LimitParams"], state: State,
                    target_theta: float, dt: float, *, theta_index: int = 0,
                    max_time: float = 1000.0) -> CrossingResult:
    """First time the tracked phase coordinate reaches ``target_theta``.

    ``field`` is either a full :class:`Ensemble` (phase ``theta_index``
    is tracked) or a :class:`~hybridkuramoto.limit_system.LimitParams`
    (state is the planar ``(v, theta)`` pair packed as an N=1 state).
    The crossing is localized inside the step containing the sign change
    by fixed-depth bisection on the substep size, giving a deterministic
    ``t_cross`` with phase error well below 1e-10.

    Preconditions (tracked phase below target, moving forward) that fail
    simply yield a not-found result, as does an exhausted horizon.
    """
    from .limit_system import LimitParams  # local import to avoid a cycle

    if isinstance(field, LimitParams):
        def take(th_arr, v_arr, h):
            vv, th = _kernels.limit_rk4_step(
                v_arr[0], th_arr[0], field.m, field.d, field.omega,
                field.lamR, field.theta_star, h)
            return np.array([th]), np.array([vv])
        idx = 0
    else:
        def take(th_arr, v_arr, h):
            return _kernels.full_rk4_step(
                th_arr, v_arr, field.m, field.d, field.omega, field.lam, field.n, h)
        idx = theta_index

    if state.theta[idx] >= target_theta:
        return CrossingResult(found=False, t_cross=None, state=None)
    theta, v = np.array(state.theta), np.array(state.v)
    t = state.t
    t_end = state.t + max_time
    while t < t_end:
        theta_new, v_new = take(theta, v, dt)
        if not np.all(np.isfinite(theta_new)):
            return CrossingResult(found=False, t_cross=None, state=None)
        if theta_new[idx] >= target_theta:
            lo, hi = 0.0, dt
            hit = (theta_new, v_new)
            for _ in range(_kernels._BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                if mid == lo or mid == hi:
                    break
                cand = take(theta, v, mid)
                if cand[0][idx] >= target_theta:
                    hi = mid
                    hit = cand
                else:
                    lo = mid
            return CrossingResult(found=True, t_cross=t + hi,
                                  state=State(t=t + hi, theta=hit[0], v=hit[1]))
        theta, v = theta_new, v_new
        t += dt
    return CrossingResult(found=False, t_cross=None, state=None)
