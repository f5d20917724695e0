"""Workbench for the all-to-all hybrid first/second-order Kuramoto model.

Simulates mixed overdamped/inertial oscillator ensembles, enumerates
their phase-locked equilibrium classes, detects the standard
synchronization states on finite horizons, and numerically audits the
identities tying those states together (conserved weighted phase sum,
energy balance, return-map identities, divergence criterion, velocity
envelopes).
"""

from .model import (
    Ensemble,
    ParameterError,
    State,
    instantaneous_frequencies,
    momentum,
    normalize_frame,
    stationarity_residual,
    vector_field,
)
from .integrator import (
    CrossingResult,
    IntegrationError,
    IntegratorConfig,
    Trajectory,
    integrate,
    locate_crossing,
    random_initial_state,
    step,
)
from .diagnostics import (
    OrderParameterSample,
    diagnostics_report,
    energy_ledger,
    landau_kolmogorov_check,
    order_parameter,
    phase_diameter,
    unwrap_angles,
    velocity_envelope_check,
    velocity_envelope_report,
)
from .equilibria import (
    EquilibriaResult,
    EquilibriumClass,
    brute_force_equilibria,
    delta_distance,
    delta_signature,
    enumerate_equilibria,
    gauge_anchor,
    reconstruct_phases,
    self_consistency_roots,
)
from .classifier import (
    AuditCase,
    AuditReport,
    ClassificationReport,
    Tolerances,
    Verdict,
    build_drift_suite,
    build_sync_suite,
    classify_trajectory,
    detect_fpls,
    detect_fss,
    detect_opss,
    detect_pls,
    detect_pss,
    equivalence_audit,
)
from .limit_system import (
    AutonomyReport,
    LimitParams,
    PoincareResult,
    autonomy_audit,
    divergence_check,
    equilibrium_angles,
    limit_equilibria,
    limit_vector_field,
    lyapunov_value,
    poincare_return,
    section_anchor,
)

__version__ = "0.1.0"
