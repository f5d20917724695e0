"""Exhaustive enumeration of phase-locked equilibrium classes.

A stationary configuration of the normalized ensemble satisfies, with
(r, Psi) its own order parameter,

    omega_j + lam * r * sin(Psi - psi_j) = 0      for every j,

so sin(Psi - psi_j) = -omega_j / (lam r) and the cosine carries a free
sign sigma_j.  Summing cosines against the order-parameter identity
leaves one scalar self-consistency condition per sign vector: x = lam*r
must be a root of

    F_sigma(x) = x - (lam/N) sum_j sigma_j sqrt(1 - (omega_j/x)^2)

on [omega_max, lam].  Each root reconstructs a unique relative-phase
configuration; the global shift psi -> psi + s*1 is the only remaining
freedom, so classes are enumerated modulo that shift.  With lam below
omega_max no configuration can balance the largest frequency and the
equilibrium set is empty.

The sweep over all 2^N sign vectors is exhaustive up to N = 20 and
refused beyond.  A torus-grid brute-force search (N <= 4) provides an
independent oracle for cross-validation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import Ensemble, FloatArray, ParameterError, stationarity_residual

__all__ = [
    "CandidateRejected",
    "EquilibriumClass",
    "EquilibriaResult",
    "self_consistency_roots",
    "reconstruct_phases",
    "enumerate_equilibria",
    "gauge_anchor",
    "brute_force_equilibria",
    "delta_signature",
    "delta_distance",
]

_SWEEP_LIMIT = 20
_ROOT_DEDUPE = 1e-9
_CLASS_DEDUPE = 1e-8
_RESIDUAL_TOL = 1e-9
_DEGENERATE_OMEGA = 1e-12


class CandidateRejected(ValueError):
    """A sign-vector/root pairing failed the reconstruction invariants."""


@dataclass(frozen=True)
class EquilibriumClass:
    """One phase-locked configuration modulo common shift.

    ``Delta`` holds the relative angles (mean phase minus oscillator
    phase) in (-pi, pi]; ``representative`` is the lifted configuration
    with mean phase 0 (for degenerate zero-order-parameter classes,
    where the mean phase is undefined, the first oscillator is pinned to
    0 instead).  ``residual`` is the largest stationarity defect at the
    representative.
    """

    r: float
    sigma: Optional[tuple[int, ...]]
    Delta: FloatArray
    representative: FloatArray
    residual: float
    degenerate: bool = False

    def __post_init__(self) -> None:
        D = np.array(self.Delta, dtype=np.float64)
        rep = np.array(self.representative, dtype=np.float64)
        D.setflags(write=False)
        rep.setflags(write=False)
        object.__setattr__(self, "Delta", D)
        object.__setattr__(self, "representative", rep)

    def to_json_dict(self) -> dict:
        return {
            "r": self.r,
            "sigma": list(self.sigma) if self.sigma is not None else None,
            "Delta": self.Delta.tolist(),
            "representative": self.representative.tolist(),
            "residual": self.residual,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class EquilibriaResult:
    classes: tuple[EquilibriumClass, ...]
    degenerate_family: bool = False
    reason: Optional[str] = None

    def __len__(self) -> int:
        return len(self.classes)

    def to_json_dict(self) -> dict:
        return {
            "classes": [c.to_json_dict() for c in self.classes],
            "degenerate_family": self.degenerate_family,
            "reason": self.reason,
        }


def _wrap(a: FloatArray) -> FloatArray:
    w = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def delta_signature(psi: FloatArray) -> FloatArray:
    """Gauge-free relative-angle signature of an arbitrary configuration.

    Uses the configuration's own mean phase when it is well defined and
    pins the first oscillator otherwise (zero order parameter).
    """
    psi = np.asarray(psi, dtype=np.float64)
    z = np.exp(1j * psi).mean()
    if np.abs(z) > 1e-8:
        return _wrap(np.angle(z) - psi)
    return _wrap(psi - psi[0])


def delta_distance(a: FloatArray, b: FloatArray) -> float:
    """Largest entrywise circular distance between two signatures."""
    return float(np.abs(_wrap(np.asarray(a) - np.asarray(b))).max())


def _gap(x: FloatArray, sigma: FloatArray, omega: FloatArray, lam: float) -> FloatArray:
    """Self-consistency defect F_sigma(x), vectorized in x."""
    x = np.asarray(x, dtype=np.float64)
    root = np.sqrt(np.clip(1.0 - (omega / x[..., None]) ** 2, 0.0, None))
    return x - (lam / omega.shape[0]) * (root @ sigma)


def self_consistency_roots(ensemble: Ensemble, sigma: Sequence[int],
                           cells: int = 4096) -> list[float]:
    """All roots of the sign-vector self-consistency defect on [omega_max, lam].

    Uniform subdivision into ``cells`` intervals, bisection on every sign
    change, an explicit zero test at the interval endpoints (where the
    square-root terms degenerate), and de-duplication at 1e-9 spacing.
    Returns an empty list when ``lam < omega_max`` (no configuration can
    balance the largest frequency).
    """
    sig = np.asarray(sigma, dtype=np.float64)
    if sig.shape != (ensemble.N,) or not np.all(np.abs(sig) == 1.0):
        raise ParameterError("sigma must be a length-N vector of +/-1")
    wM = ensemble.omega_max
    if wM <= _DEGENERATE_OMEGA:
        raise ParameterError(
            "identical-frequency ensemble: use enumerate_equilibria, which "
            "handles the degenerate branch")
    lam = ensemble.lam
    if lam < wM:
        return []
    xs = np.linspace(wM, lam, cells + 1)
    vals = _gap(xs, sig, ensemble.omega, lam)
    zero_tol = 1e-12 * max(1.0, lam)
    roots: list[float] = []
    if abs(vals[0]) <= zero_tol:
        roots.append(float(xs[0]))
    for i in range(cells):
        a, b = float(xs[i]), float(xs[i + 1])
        fa, fb = float(vals[i]), float(vals[i + 1])
        if abs(fb) <= zero_tol:
            roots.append(b)
            continue
        if abs(fa) <= zero_tol or fa * fb > 0.0:
            continue
        for _ in range(100):
            mid = 0.5 * (a + b)
            if mid == a or mid == b:
                break
            fm = float(_gap(np.array(mid), sig, ensemble.omega, lam))
            if fa * fm <= 0.0:
                b, fb = mid, fm
            else:
                a, fa = mid, fm
        roots.append(0.5 * (a + b))
    roots.sort()
    out: list[float] = []
    for r in roots:
        if not out or r - out[-1] > _ROOT_DEDUPE:
            out.append(r)
    return out


def reconstruct_phases(ensemble: Ensemble, r: float,
                       sigma: Sequence[int]) -> EquilibriumClass:
    """Rebuild the equilibrium class for a validated root ``r``.

    The relative angles follow from arctan2 of the forced sine and the
    sign-resolved cosine; the representative pins the mean phase to 0.
    Raises :class:`CandidateRejected` when the reconstruction fails the
    self-consistency or stationarity invariants (spurious pairing).
    """
    sig = np.asarray(sigma, dtype=np.float64)
    x = ensemble.lam * r
    s = -ensemble.omega / x
    if np.any(np.abs(s) > 1.0 + 1e-12):
        raise CandidateRejected(f"|omega_j|/(lam r) exceeds 1 at r={r}")
    s = np.clip(s, -1.0, 1.0)
    c = sig * np.sqrt(1.0 - s * s)
    Delta = np.arctan2(s, c)
    cos_defect = abs(float(np.cos(Delta).sum()) - r * ensemble.N)
    sin_defect = abs(float(np.sin(Delta).sum()))
    if cos_defect > 1e-9 or sin_defect > 1e-9:
        raise CandidateRejected(
            f"self-consistency defect (cos {cos_defect:.2e}, sin {sin_defect:.2e}) at r={r}")
    rep = -Delta
    residual = float(np.abs(stationarity_residual(ensemble, rep)).max())
    if residual > _RESIDUAL_TOL:
        raise CandidateRejected(f"stationarity residual {residual:.2e} at r={r}")
    return EquilibriumClass(r=float(r), sigma=tuple(int(v) for v in sigma),
                            Delta=Delta, representative=rep, residual=residual)


def _dedupe_classes(classes: list[EquilibriumClass]) -> list[EquilibriumClass]:
    classes = sorted(classes, key=lambda c: (-c.r, tuple(c.Delta)))
    uniq: list[EquilibriumClass] = []
    for cls in classes:
        if not any(delta_distance(cls.Delta, u.Delta) < _CLASS_DEDUPE for u in uniq):
            uniq.append(cls)
    return uniq


def enumerate_equilibria(ensemble: Ensemble, cells: int = 4096) -> EquilibriaResult:
    """All phase-locked classes of the normalized ensemble, modulo shift.

    Sweeps every sign vector, solves the scalar self-consistency
    condition, reconstructs and validates each candidate, de-duplicates
    by relative-angle signature, and sorts by order parameter magnitude
    (descending).  Identical-frequency ensembles take a dedicated
    branch: the sign sweep degenerates to two-cluster configurations,
    and the zero-order-parameter states (outside the sign
    parametrization) are listed via the brute-force oracle for N <= 3 or
    reported as a possible continuum for N >= 4.
    """
    if not ensemble.is_normalized():
        raise ParameterError("enumerate_equilibria requires a frame-normalized ensemble")
    if ensemble.N > _SWEEP_LIMIT:
        raise ParameterError(
            f"sign-vector sweep is exhaustive only up to N={_SWEEP_LIMIT} "
            f"(2^N budget); got N={ensemble.N}. Reduce N or use trajectory-based "
            "detection instead")
    wM = ensemble.omega_max
    if wM <= _DEGENERATE_OMEGA:
        return _enumerate_identical_frequencies(ensemble)
    if ensemble.lam < wM:
        return EquilibriaResult(
            classes=(),
            reason="no equilibria: coupling below the largest frequency magnitude "
                   "leaves the stationary balance infeasible")
    found: list[EquilibriumClass] = []
    for sigma in itertools.product((1, -1), repeat=ensemble.N):
        for x in self_consistency_roots(ensemble, sigma, cells=cells):
            try:
                found.append(reconstruct_phases(ensemble, x / ensemble.lam, sigma))
            except CandidateRejected:
                continue
    return EquilibriaResult(classes=tuple(_dedupe_classes(found)))


def _enumerate_identical_frequencies(ensemble: Ensemble) -> EquilibriaResult:
    """Degenerate branch omega = 0: two-cluster states plus r = 0 states."""
    found: list[EquilibriumClass] = []
    for sigma in itertools.product((1, -1), repeat=ensemble.N):
        total = sum(sigma)
        if total <= 0:
            continue  # r must be positive in the sign parametrization
        r = total / ensemble.N
        Delta = np.where(np.asarray(sigma) > 0, 0.0, np.pi)
        rep = -Delta
        residual = float(np.abs(stationarity_residual(ensemble, rep)).max())
        found.append(EquilibriumClass(
            r=float(r), sigma=tuple(sigma), Delta=Delta, representative=rep,
            residual=residual))
    found = _dedupe_classes(found)
    if ensemble.N <= 3:
        for psi in brute_force_equilibria(ensemble):
            if np.abs(np.exp(1j * psi).mean()) >= 1e-6:
                continue  # covered by the sign sweep
            residual = float(np.abs(stationarity_residual(ensemble, psi)).max())
            found.append(EquilibriumClass(
                r=0.0, sigma=None, Delta=delta_signature(psi),
                representative=psi, residual=residual, degenerate=True))
        return EquilibriaResult(classes=tuple(_dedupe_classes(found)))
    return EquilibriaResult(
        classes=tuple(found), degenerate_family=True,
        reason="identical frequencies with N >= 4: zero-order-parameter states "
               "form a possible continuum and are not listed")


def gauge_anchor(cls: EquilibriumClass, ensemble: Ensemble, C0: float) -> FloatArray:
    """Representative on the shift orbit compatible with the conserved sum.

    Returns ``psi + s*1`` with ``s`` chosen so that
    ``sum_j d_j (psi_j + s) = C0`` -- the unique representative selected by
    the conserved weighted phase sum of a trajectory.
    """
    psi = cls.representative
    s = (C0 - float(ensemble.d @ psi)) / float(ensemble.d.sum())
    return psi + s


_BF_DEFAULT_GRID = {1: 1, 2: 720, 3: 360, 4: 96}


def brute_force_equilibria(ensemble: Ensemble,
                           grid_per_axis: Optional[int] = None) -> list[FloatArray]:
    """Independent equilibrium search by torus-grid scan plus Newton polish.

    Pins ``psi_1 = 0`` (shift gauge), scans a uniform grid over the
    remaining N-1 circle axes, starts a damped Newton iteration on the
    reduced system (components 2..N; component 1 is dependent because the
    residuals sum to zero) from every local minimum of the residual norm,
    and de-duplicates the converged roots.  Exhaustive only for N <= 4.
    """
    if not ensemble.is_normalized():
        raise ParameterError("brute_force_equilibria requires a frame-normalized ensemble")
    N = ensemble.N
    if N > 4:
        raise ParameterError("brute-force search is refused for N > 4 (grid budget)")
    if N == 1:
        return [np.zeros(1)]
    grid = grid_per_axis or _BF_DEFAULT_GRID[N]
    axis = np.linspace(0.0, 2.0 * np.pi, grid, endpoint=False)
    mesh = np.meshgrid(*([axis] * (N - 1)), indexing="ij")
    psi = np.zeros(mesh[0].shape + (N,))
    for k in range(1, N):
        psi[..., k] = mesh[k - 1]
    res = np.abs(stationarity_residual(ensemble, psi)).max(axis=-1)
    is_min = np.ones(res.shape, dtype=bool)
    for offsets in itertools.product((-1, 0, 1), repeat=N - 1):
        if all(o == 0 for o in offsets):
            continue
        shifted = res
        for ax, o in enumerate(offsets):
            if o != 0:
                shifted = np.roll(shifted, o, axis=ax)
        is_min &= res <= shifted
    starts = psi[is_min]
    roots: list[FloatArray] = []
    for p0 in starts:
        root = _damped_newton(ensemble, p0)
        if root is None:
            continue
        root = np.mod(root - root[0], 2.0 * np.pi)
        if not any(np.abs(_wrap(root - r)).max() < 1e-6 for r in roots):
            roots.append(root)
    roots.sort(key=lambda r: tuple(r))
    return roots


def _damped_newton(ensemble: Ensemble, psi0: FloatArray,
                   max_iter: int = 100) -> Optional[FloatArray]:
    lam_N = ensemble.lam / ensemble.N
    psi = np.array(psi0, dtype=np.float64)
    for _ in range(max_iter):
        g = stationarity_residual(ensemble, psi)
        if np.abs(g).max() < 1e-12:
            break
        reduced = g[1:]
        J = lam_N * np.cos(psi[None, 1:] - psi[1:, None])
        np.fill_diagonal(J, 0.0)
        for a in range(1, ensemble.N):
            J[a - 1, a - 1] = -lam_N * sum(
                np.cos(psi[k] - psi[a]) for k in range(ensemble.N) if k != a)
        try:
            step = np.linalg.solve(J, -reduced)
        except np.linalg.LinAlgError:
            return None
        base = np.abs(reduced).max()
        scale = 1.0
        for _ in range(30):
            trial = psi.copy()
            trial[1:] += scale * step
            if np.abs(stationarity_residual(ensemble, trial)[1:]).max() < base:
                psi = trial
                break
            scale *= 0.5
        else:
            break
    if np.abs(stationarity_residual(ensemble, psi)).max() < 1e-10:
        return psi
    return None
