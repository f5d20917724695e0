"""Finite-horizon detectors for the synchronization notions, plus the audit.

Asymptotic definitions cannot be decided exactly from a finite run, so
every detector returns a three-valued verdict with a wide hysteresis
band: *true* below a tight threshold, *false* above 1000x that
threshold, *inconclusive* in between (read: integrate longer).  The
detectors:

* frequency synchronization -- trailing-window maximum of every
  instantaneous phase velocity;
* phase locking -- the running phase diameter stays under a cap and
  stops growing in the trailing window;
* full phase locking -- trailing total variation of every pairwise phase
  difference, plus a stationarity residual check at the final
  configuration; the nearest enumerated equilibrium class (selected by
  relative-angle signature, anchored through the run's conserved
  weighted phase sum) is attached as a witness;
* order-parameter synchronization -- trailing variation of the complex
  order parameter plus the magnitude threshold ``R >= omega_max/lam``;
* phase synchronization -- pairwise differences tend to zero; only
  meaningful when all natural frequencies coincide, reported
  not-applicable otherwise.

The equivalence audit runs all detectors over a batch of cases and flags
any case whose four decided verdicts disagree; an inconclusive verdict
is never a disagreement, it is a request for a longer horizon.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .diagnostics import velocity_envelope_check
from .equilibria import (EquilibriaResult, delta_distance, delta_signature,
                         enumerate_equilibria, gauge_anchor)
from .integrator import IntegratorConfig, Trajectory, integrate
from .model import Ensemble, ParameterError, State, normalize_frame, stationarity_residual

__all__ = [
    "Verdict",
    "Tolerances",
    "ClassificationReport",
    "AuditCase",
    "AuditReport",
    "detect_fss",
    "detect_pls",
    "detect_fpls",
    "detect_opss",
    "detect_pss",
    "classify_trajectory",
    "equivalence_audit",
    "build_sync_suite",
    "build_drift_suite",
    "EQUIVALENCE_STATES",
]

#: the four synchronization states the audit ties together
EQUIVALENCE_STATES = ("FPLS", "PLS", "FSS", "OPSS")

_HYSTERESIS = 1e3


class Verdict(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    INCONCLUSIVE = "inconclusive"
    NOT_APPLICABLE = "not_applicable"

    @property
    def decided(self) -> bool:
        return self in (Verdict.TRUE, Verdict.FALSE)


@dataclass(frozen=True)
class Tolerances:
    freq_tol: float = 1e-6
    lock_var_tol: float = 1e-6
    op_var_tol: float = 1e-6
    opss_margin: float = 1e-6
    tail_fraction: float = 0.2
    diameter_cap: float = 100.0 * 2.0 * np.pi

    def __post_init__(self) -> None:
        for name in ("freq_tol", "lock_var_tol", "op_var_tol", "opss_margin",
                     "diameter_cap"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if not 0.0 < self.tail_fraction < 1.0:
            raise ParameterError("tail_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class ClassificationReport:
    """Per-definition verdicts plus witness data for one trajectory.

    Construction enforces the structural finite-horizon implications:
    a true full-lock verdict promotes the phase-lock and
    frequency-synchronization verdicts, and a true phase-synchronization
    verdict promotes full lock.
    """

    pss: Verdict
    fpls: Verdict
    pls: Verdict
    fss: Verdict
    opss: Verdict
    witness: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        fpls, pls, fss = self.fpls, self.pls, self.fss
        if self.pss is Verdict.TRUE and fpls is not Verdict.TRUE:
            fpls = Verdict.TRUE
        if fpls is Verdict.TRUE:
            if pls is not Verdict.TRUE:
                pls = Verdict.TRUE
            if fss is not Verdict.TRUE:
                fss = Verdict.TRUE
        object.__setattr__(self, "fpls", fpls)
        object.__setattr__(self, "pls", pls)
        object.__setattr__(self, "fss", fss)

    def equivalence_verdicts(self) -> tuple[Verdict, Verdict, Verdict, Verdict]:
        return (self.fpls, self.pls, self.fss, self.opss)

    def pairwise_agreement(self) -> tuple[tuple[Optional[bool], ...], ...]:
        """4x4 matrix over the audited states: True when both verdicts are
        decided and equal, False when decided and different, None when
        either side is inconclusive."""
        v = self.equivalence_verdicts()
        return tuple(
            tuple((v[i] is v[j]) if (v[i].decided and v[j].decided) else None
                  for j in range(4))
            for i in range(4))

    def to_json_dict(self) -> dict:
        return {
            "PSS": self.pss.value,
            "FPLS": self.fpls.value,
            "PLS": self.pls.value,
            "FSS": self.fss.value,
            "OPSS": self.opss.value,
            "agreement": [list(row) for row in self.pairwise_agreement()],
            "witness": self.witness,
        }


def _tail_start_index(t: np.ndarray, tail_fraction: float) -> int:
    t_from = t[-1] - tail_fraction * (t[-1] - t[0])
    idx = int(np.searchsorted(t, t_from))
    return min(idx, len(t) - 2) if len(t) > 1 else 0


def _too_short(trajectory: Trajectory) -> bool:
    """No trailing window to measure: nothing can be decided."""
    return len(trajectory) < 2


def _band_verdict(value: float, true_below: float, false_above: float) -> Verdict:
    if value < true_below:
        return Verdict.TRUE
    if value > false_above:
        return Verdict.FALSE
    return Verdict.INCONCLUSIVE


def detect_fss(trajectory: Trajectory, tol: Tolerances) -> Verdict:
    """Do all instantaneous frequencies vanish in the trailing window?"""
    if trajectory.t[-1] - trajectory.t[0] < 10.0:
        return Verdict.INCONCLUSIVE
    i0 = _tail_start_index(trajectory.t, tol.tail_fraction)
    freqs = np.abs(trajectory.frequencies()[i0:])
    tail_max = float(freqs.max())
    return _band_verdict(tail_max, tol.freq_tol, _HYSTERESIS * tol.freq_tol)


def detect_pls(trajectory: Trajectory, tol: Tolerances) -> Verdict:
    """Does the running phase diameter stay bounded and stop growing?"""
    if _too_short(trajectory):
        return Verdict.INCONCLUSIVE
    diam = np.max(trajectory.theta, axis=1) - np.min(trajectory.theta, axis=1)
    running = np.maximum.accumulate(diam)
    if running[-1] >= tol.diameter_cap:
        return Verdict.FALSE
    i0 = _tail_start_index(trajectory.t, tol.tail_fraction)
    tail_increase = float(running[-1] - running[i0])
    if tail_increase < tol.lock_var_tol:
        return Verdict.TRUE
    return Verdict.INCONCLUSIVE


def _pairwise_tail_variation(trajectory: Trajectory, i0: int) -> float:
    theta = trajectory.theta[i0:]
    worst = 0.0
    for j in range(theta.shape[1]):
        for k in range(j + 1, theta.shape[1]):
            tv = float(np.abs(np.diff(theta[:, j] - theta[:, k])).sum())
            worst = max(worst, tv)
    return worst


def detect_fpls(trajectory: Trajectory, tol: Tolerances,
                equilibria_set: Optional[EquilibriaResult] = None,
                witness: Optional[dict] = None) -> Verdict:
    """Do all pairwise phase differences settle to constants?

    True requires both a tiny trailing total variation of every pairwise
    difference and a near-stationary final configuration.  When an
    enumerated equilibrium set is supplied, the nearest class (by
    relative-angle signature) and its distance are recorded in
    ``witness``, together with the representative anchored through the
    run's conserved weighted phase sum.
    """
    if _too_short(trajectory):
        return Verdict.INCONCLUSIVE
    i0 = _tail_start_index(trajectory.t, tol.tail_fraction)
    tv = _pairwise_tail_variation(trajectory, i0)
    final_residual = float(
        np.abs(stationarity_residual(trajectory.ensemble, trajectory.theta[-1])).max())
    if witness is not None:
        witness["pairwise_tail_variation"] = tv
        witness["final_residual"] = final_residual
        if equilibria_set is not None and len(equilibria_set) > 0:
            sig = delta_signature(trajectory.theta[-1])
            dists = [delta_distance(sig, cls.Delta) for cls in equilibria_set.classes]
            best = int(np.argmin(dists))
            witness["nearest_class_index"] = best
            witness["nearest_class_distance"] = float(dists[best])
            witness["nearest_class_r"] = equilibria_set.classes[best].r
            witness["anchored_representative"] = gauge_anchor(
                equilibria_set.classes[best], trajectory.ensemble,
                float(trajectory.M[0])).tolist()
    if tv < tol.lock_var_tol and final_residual < 10.0 * tol.freq_tol:
        return Verdict.TRUE
    if tv > _HYSTERESIS * tol.lock_var_tol:
        return Verdict.FALSE
    return Verdict.INCONCLUSIVE


def detect_opss(trajectory: Trajectory, tol: Tolerances,
                ensemble: Optional[Ensemble] = None,
                witness: Optional[dict] = None) -> Verdict:
    """Does the order parameter converge with magnitude >= omega_max/lam?"""
    ens = ensemble if ensemble is not None else trajectory.ensemble
    if _too_short(trajectory):
        return Verdict.INCONCLUSIVE
    i0 = _tail_start_index(trajectory.t, tol.tail_fraction)
    z = np.exp(1j * trajectory.theta[i0:]).mean(axis=1)
    variation = float(np.abs(np.diff(z)).sum())
    r_tail = float(trajectory.R[i0:].mean())
    threshold = ens.omega_max / ens.lam
    if witness is not None:
        witness["z_tail_variation"] = variation
        witness["r_tail_mean"] = r_tail
        witness["r_threshold"] = threshold
        witness["r_star"] = r_tail
        witness["theta_star"] = float(trajectory.Theta[i0:].mean())
    if variation < tol.op_var_tol and r_tail >= threshold - tol.opss_margin:
        return Verdict.TRUE
    if variation > _HYSTERESIS * tol.op_var_tol:
        return Verdict.FALSE
    if r_tail < threshold - _HYSTERESIS * tol.opss_margin:
        return Verdict.FALSE
    return Verdict.INCONCLUSIVE


def detect_pss(trajectory: Trajectory, tol: Tolerances) -> Verdict:
    """Do all pairwise differences tend to zero (identical frequencies only)?"""
    ens = trajectory.ensemble
    if ens.omega_max > 1e-12:
        return Verdict.NOT_APPLICABLE
    if _too_short(trajectory):
        return Verdict.INCONCLUSIVE
    i0 = _tail_start_index(trajectory.t, tol.tail_fraction)
    theta = trajectory.theta[i0:]
    worst = 0.0
    for j in range(ens.N):
        for k in range(j + 1, ens.N):
            worst = max(worst, float(np.abs(theta[:, j] - theta[:, k]).max()))
    return _band_verdict(worst, tol.lock_var_tol, _HYSTERESIS * tol.lock_var_tol)


def classify_trajectory(trajectory: Trajectory, tol: Tolerances,
                        equilibria_set: Optional[EquilibriaResult] = None
                        ) -> ClassificationReport:
    """Run every detector and assemble the report with witness data."""
    witness: dict = {}
    i0 = _tail_start_index(trajectory.t, tol.tail_fraction)
    freqs = np.abs(trajectory.frequencies()[i0:])
    witness["freq_tail_max"] = float(freqs.max())
    diam = np.max(trajectory.theta, axis=1) - np.min(trajectory.theta, axis=1)
    witness["max_phase_diameter"] = float(diam.max())
    witness["envelope_worst"] = float(
        velocity_envelope_check(trajectory.ensemble, trajectory).max())
    fss = detect_fss(trajectory, tol)
    pls = detect_pls(trajectory, tol)
    fpls = detect_fpls(trajectory, tol, equilibria_set, witness)
    opss = detect_opss(trajectory, tol, witness=witness)
    pss = detect_pss(trajectory, tol)
    return ClassificationReport(pss=pss, fpls=fpls, pls=pls, fss=fss, opss=opss,
                                witness=witness)


@dataclass(frozen=True)
class AuditCase:
    case_id: str
    ensemble: Ensemble
    initial: State
    config: IntegratorConfig


@dataclass(frozen=True)
class AuditReport:
    """Outcome of an equivalence audit over a batch of cases.

    ``agreement_matrix[i][j]`` counts the cases where audited states i
    and j were both decided and agreed; the diagonal counts decided
    verdicts per state.  ``flags`` lists the cases whose four decided
    verdicts disagree -- the empirical failure mode of the equivalence.
    """

    case_ids: tuple[str, ...]
    reports: tuple[ClassificationReport, ...]
    flags: tuple[dict, ...]
    agreement_matrix: tuple[tuple[int, ...], ...]
    n_inconclusive: int

    def to_json_dict(self) -> dict:
        return {
            "states": list(EQUIVALENCE_STATES),
            "cases": {cid: rep.to_json_dict()
                      for cid, rep in zip(self.case_ids, self.reports)},
            "agreement_matrix": [list(row) for row in self.agreement_matrix],
            "flags": list(self.flags),
            "n_inconclusive": self.n_inconclusive,
        }


def _audit_one(case: AuditCase, tol: Tolerances) -> ClassificationReport:
    traj = integrate(case.ensemble, case.initial, case.config)
    eq = None
    if case.ensemble.N <= 12:
        try:
            eq = enumerate_equilibria(case.ensemble)
        except ParameterError:
            eq = None
    return classify_trajectory(traj, tol, eq)


def equivalence_audit(cases: Sequence[AuditCase], tol: Optional[Tolerances] = None,
                      threads: int = 1) -> AuditReport:
    """Run the detector battery over ``cases`` and cross-check agreement.

    A case is flagged iff all four audited-state verdicts are decided and
    they are not all equal.  Results are merged in case order, so the
    report is deterministic regardless of ``threads``.
    """
    tol = tol or Tolerances()
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(lambda c: _audit_one(c, tol), cases))
    else:
        reports = [_audit_one(c, tol) for c in cases]
    flags: list[dict] = []
    matrix = np.zeros((4, 4), dtype=int)
    n_inconclusive = 0
    for case, rep in zip(cases, reports):
        verdicts = rep.equivalence_verdicts()
        decided = [v.decided for v in verdicts]
        n_inconclusive += sum(1 for v in verdicts if v is Verdict.INCONCLUSIVE)
        for i in range(4):
            for j in range(4):
                if decided[i] and decided[j] and verdicts[i] is verdicts[j]:
                    matrix[i, j] += 1
        if all(decided) and len({v for v in verdicts}) > 1:
            flags.append({
                "case_id": case.case_id,
                "verdicts": {s: v.value for s, v in zip(EQUIVALENCE_STATES, verdicts)},
            })
    return AuditReport(
        case_ids=tuple(c.case_id for c in cases),
        reports=tuple(reports),
        flags=tuple(flags),
        agreement_matrix=tuple(tuple(int(x) for x in row) for row in matrix),
        n_inconclusive=n_inconclusive,
    )


def _spawn_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def build_sync_suite(n_cases: int = 50, seed: int = 2026, *,
                     N_range: tuple[int, int] = (2, 6),
                     lambda_factor: float = 4.0,
                     m_range: tuple[float, float] = (0.5, 2.0),
                     d_range: tuple[float, float] = (0.5, 2.0),
                     omega_max_range: tuple[float, float] = (0.25, 1.0),
                     T: float = 500.0, dt: float = 1e-3,
                     sample_every: int = 50) -> tuple[list[AuditCase], Tolerances]:
    """Strong-coupling audit suite: random ensembles with lam = factor * omega_max.

    Frequencies are drawn, frame-normalized, then rescaled so omega_max
    lands in ``omega_max_range`` (keeping the zero sum); initial phases
    are uniform on [0, 2*pi) and inertial velocities uniform on [-1, 1].
    """
    cases = []
    for i in range(n_cases):
        rng = _spawn_rng(seed, i)
        N = int(rng.integers(N_range[0], N_range[1] + 1))
        n = int(rng.integers(0, N + 1))
        d = rng.uniform(*d_range, N)
        m = np.zeros(N)
        m[n:] = rng.uniform(*m_range, N - n)
        while True:
            omega = rng.uniform(-1.0, 1.0, N)
            omega = omega - d * (omega.sum() / d.sum())
            wM = float(np.abs(omega).max())
            if wM > 1e-9:
                break
        omega = omega * (rng.uniform(*omega_max_range) / wM)
        ens = Ensemble(N=N, n=n, m=m, d=d, omega=omega,
                       lam=lambda_factor * float(np.abs(omega).max()))
        ens, _ = normalize_frame(ens)
        theta0 = rng.uniform(0.0, 2.0 * np.pi, N)
        v0 = rng.uniform(-1.0, 1.0, N - n)
        cases.append(AuditCase(
            case_id=f"sync-{i:03d}",
            ensemble=ens,
            initial=State(t=0.0, theta=theta0, v=v0),
            config=IntegratorConfig(dt=dt, T=T, sample_every=sample_every, seed=seed + i),
        ))
    return cases, Tolerances()


def build_drift_suite(n_cases: int = 10, seed: int = 4099, *,
                      omega1_range: tuple[float, float] = (1.2, 2.0),
                      subcritical_range: tuple[float, float] = (0.5, 0.8),
                      d_range: tuple[float, float] = (0.5, 1.25),
                      m_range: tuple[float, float] = (0.5, 2.0),
                      T: float = 500.0, dt: float = 1e-3,
                      sample_every: int = 50) -> tuple[list[AuditCase], Tolerances]:
    """Two-oscillator suite below the locking threshold (all states fail).

    For N = 2 the stationary balance needs ``lam >= 2 * omega_max``; the
    suite draws ``lam = u * 2 * omega_max`` with u < 0.8, so phases drift
    forever.  The returned tolerances lower the diameter cap so the
    linear diameter growth decides the phase-lock verdict well inside
    the horizon.
    """
    cases = []
    for i in range(n_cases):
        rng = _spawn_rng(seed, i)
        n = int(rng.integers(0, 3))
        d = rng.uniform(*d_range, 2)
        m = np.zeros(2)
        m[n:] = rng.uniform(*m_range, 2 - n)
        w = float(rng.uniform(*omega1_range))
        omega = np.array([w, -w])
        omega = omega - d * (omega.sum() / d.sum())
        wM = float(np.abs(omega).max())
        lam = float(rng.uniform(*subcritical_range)) * 2.0 * wM
        ens = Ensemble(N=2, n=n, m=m, d=d, omega=omega, lam=lam)
        ens, _ = normalize_frame(ens)
        theta0 = rng.uniform(0.0, 2.0 * np.pi, 2)
        v0 = rng.uniform(-1.0, 1.0, 2 - n)
        cases.append(AuditCase(
            case_id=f"drift-{i:03d}",
            ensemble=ens,
            initial=State(t=0.0, theta=theta0, v=v0),
            config=IntegratorConfig(dt=dt, T=T, sample_every=sample_every, seed=seed + i),
        ))
    return cases, Tolerances(diameter_cap=30.0 * 2.0 * np.pi)
