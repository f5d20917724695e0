import numpy as np
import pytest

from hybridkuramoto import (
    IntegratorConfig,
    LimitParams,
    ParameterError,
    autonomy_audit,
    divergence_check,
    integrate,
    limit_equilibria,
    limit_vector_field,
    lyapunov_value,
    poincare_return,
    random_initial_state,
    section_anchor,
)
from hybridkuramoto import _kernels

# frozen reference returns computed with scipy.integrate.solve_ivp
# (DOP853-family RK, rtol=1e-12, atol=1e-14, max_step=5e-3, event-located
# section hit) on m=d=1, omega=0.5, Theta*=0
FROZEN_RETURNS = {
    (0.5, 5.0): (4.2114132064, 0.1619859019),
    (0.8, 3.0): (6.4154880967, 0.4589507278),
    (0.8, 2.5): (8.6981574009, 0.4565956566),
}


class TestVectorField:
    def test_balance_point_is_stationary(self):
        p = LimitParams(m=1.0, d=1.0, omega=0.3, lamR=0.6, theta_star=0.0)
        th = float(limit_equilibria(p)[0])
        vdot, thdot = limit_vector_field(p, 0.0, th)
        assert vdot == pytest.approx(0.0, abs=1e-15)
        assert thdot == 0.0

    def test_pure_damping(self):
        p = LimitParams(m=2.0, d=1.0, omega=0.0, lamR=0.0)
        vdot, thdot = limit_vector_field(p, 3.0, 1.2)
        assert vdot == pytest.approx(-1.5)
        assert thdot == 3.0

    def test_hand_evaluation(self):
        p = LimitParams(m=1.0, d=1.0, omega=0.5, lamR=0.5, theta_star=0.0)
        vdot, thdot = limit_vector_field(p, 1.0, 0.0)
        assert vdot == pytest.approx(-0.5)
        assert thdot == 1.0


class TestEquilibria:
    def test_two_above_threshold(self):
        p = LimitParams(m=1.0, d=1.0, omega=0.5, lamR=0.8)
        angles = limit_equilibria(p)
        assert angles.shape == (2,)
        np.testing.assert_allclose(
            sorted(angles), sorted([np.arcsin(0.625), np.pi - np.arcsin(0.625)]),
            atol=1e-12)

    def test_one_at_threshold(self):
        p = LimitParams(m=1.0, d=1.0, omega=0.5, lamR=0.5)
        angles = limit_equilibria(p)
        assert angles.shape == (1,)
        assert angles[0] == pytest.approx(np.pi / 2, abs=1e-12)

    def test_none_below_threshold(self):
        p = LimitParams(m=1.0, d=1.0, omega=0.5, lamR=0.3)
        assert limit_equilibria(p).size == 0

    def test_symmetric_pair_without_detuning(self):
        p = LimitParams(m=1.0, d=1.0, omega=0.0, lamR=1.0, theta_star=0.0)
        np.testing.assert_allclose(sorted(limit_equilibria(p)), [0.0, np.pi], atol=1e-15)

    def test_anchor_choice(self):
        assert section_anchor(LimitParams(1, 1, 0.5, 0.5)) == pytest.approx(np.pi / 2)
        assert section_anchor(LimitParams(1, 1, 0.5, 0.8)) == pytest.approx(
            np.arcsin(0.625))


class TestDivergence:
    @pytest.mark.parametrize("d,m", [(2.0, 4.0), (1.0, 1.0), (0.7, 1.3)])
    def test_matches_constant(self, d, m):
        p = LimitParams(m=m, d=d, omega=0.4, lamR=0.9, theta_star=0.2)
        assert divergence_check(p, 100) <= 1e-6

    def test_step_size_insensitive(self):
        # the field is linear in the differentiated variables, so the
        # central-difference deviation is pure round-off at any h
        p = LimitParams(m=1.5, d=0.5, omega=0.3, lamR=0.7)
        for h in (1e-4, 1e-5):
            assert divergence_check(p, 50, h=h) <= 1e-6


class TestLyapunov:
    def test_reference_value(self):
        p = LimitParams(m=1.0, d=1.0, omega=0.0, lamR=1.0, theta_star=0.0)
        assert lyapunov_value(p, 0.0, 0.0) == -1.0

    def test_dissipation_identity_second_order_in_dt(self):
        p = LimitParams(m=1.2, d=0.7, omega=0.3, lamR=0.9, theta_star=0.4)
        defects = {}
        for dt in (1e-3, 5e-4):
            v, th = 1.3, -0.2
            vs, ths = [v], [th]
            for _ in range(int(round(4.0 / dt))):
                v, th = _kernels.limit_rk4_step(v, th, p.m, p.d, p.omega,
                                                p.lamR, p.theta_star, dt)
                vs.append(v)
                ths.append(th)
            vs, ths = np.array(vs), np.array(ths)
            L = np.array([lyapunov_value(p, vv, tt) for vv, tt in zip(vs, ths)])
            dLdt = (L[2:] - L[:-2]) / (2 * dt)
            defects[dt] = np.abs(dLdt + p.d * vs[1:-1] ** 2).max()
        assert defects[1e-3] < 1e-6
        assert defects[1e-3] / defects[5e-4] == pytest.approx(4.0, abs=1.0)

    def test_decreasing_wherever_moving(self):
        p = LimitParams(m=1.0, d=1.0, omega=0.5, lamR=0.8)
        v, th = 2.0, float(section_anchor(p))
        vals = []
        for _ in range(20000):
            v, th = _kernels.limit_rk4_step(v, th, p.m, p.d, p.omega,
                                            p.lamR, p.theta_star, 1e-3)
            vals.append(lyapunov_value(p, v, th))
        vals = np.array(vals)
        assert np.all(np.diff(vals) <= 1e-12)


class TestPoincareReturn:
    @pytest.mark.parametrize("lamR,v0", sorted(FROZEN_RETURNS))
    def test_matches_reference_run(self, lamR, v0):
        tau_ref, P_ref = FROZEN_RETURNS[(lamR, v0)]
        res = poincare_return(LimitParams(1.0, 1.0, 0.5, lamR), v0)
        assert res.crossed
        assert res.tau == pytest.approx(tau_ref, rel=1e-6)
        assert res.P == pytest.approx(P_ref, rel=1e-5)
        assert abs(res.energy_residual) <= 1e-7

    def test_capture_by_creep_at_degenerate_coupling(self):
        # small start cannot clear the flat spot within the horizon
        res = poincare_return(LimitParams(1.0, 1.0, 0.5, 0.5), 0.01, max_time=50.0)
        assert not res.crossed
        assert res.capture_reason == "horizon"

    def test_capture_by_stall(self):
        res = poincare_return(LimitParams(1.0, 1.0, 0.5, 0.8), 0.5)
        assert not res.crossed
        assert res.capture_reason == "stalled"

    def test_fast_start_asymptotics(self):
        # tau * v0 -> 2*pi and P/v0 -> 1 as v0 grows
        res = poincare_return(LimitParams(1.0, 1.0, 0.5, 0.5), 1000.0,
                              dt=1e-6, max_time=1.0)
        assert res.crossed
        assert res.tau * 1000.0 == pytest.approx(2 * np.pi, abs=0.03)
        assert res.P / 1000.0 == pytest.approx(1.0, abs=0.01)

    def test_return_map_monotone(self):
        p = LimitParams(1.0, 1.0, 0.5, 0.8)
        Ps = []
        for v0 in (2.5, 3.0, 3.5, 4.0, 5.0):
            r = poincare_return(p, v0, dt=1e-4)
            assert r.crossed
            Ps.append(r.P)
        assert all(b >= a for a, b in zip(Ps, Ps[1:]))

    def test_exponential_identity_reported_not_asserted(self):
        res = poincare_return(LimitParams(1.0, 1.0, 0.5, 0.5), 5.0, dt=1e-4)
        assert res.exp_identity_residual is not None
        assert np.isfinite(res.exp_identity_residual)

    def test_drift_regime_refused(self):
        with pytest.raises(ParameterError, match="drift"):
            poincare_return(LimitParams(1.0, 1.0, 0.5, 0.3), 1.0)

    def test_nonpositive_start_refused(self):
        with pytest.raises(ParameterError):
            poincare_return(LimitParams(1.0, 1.0, 0.5, 0.8), 0.0)

    def test_bit_deterministic(self):
        p = LimitParams(1.0, 1.0, 0.5, 0.8)
        a = poincare_return(p, 3.0, dt=1e-4)
        b = poincare_return(p, 3.0, dt=1e-4)
        assert a.tau == b.tau and a.P == b.P


@pytest.fixture(scope="module")
def converged_run(hybrid_three_ensemble):
    ens = hybrid_three_ensemble
    traj = integrate(ens, random_initial_state(ens, 5),
                     IntegratorConfig(dt=1e-3, T=500.0, sample_every=50))
    return ens, traj


class TestAutonomyAudit:
    def test_every_oscillator_lands_on_limit_equilibrium(self, converged_run):
        ens, traj = converged_run
        for j in range(ens.N):
            rep = autonomy_audit(traj, j)
            assert rep.applicable
            assert rep.tail_deviation <= 1e-5
            assert rep.equilibrium_distance <= 1e-4

    def test_equilibrium_start_reports_zeros(self, hybrid_three_ensemble):
        from hybridkuramoto import State, enumerate_equilibria, gauge_anchor
        ens = hybrid_three_ensemble
        cls = enumerate_equilibria(ens).classes[0]
        traj = integrate(ens, State(t=0.0, theta=gauge_anchor(cls, ens, 0.0),
                                    v=np.zeros(2)),
                         IntegratorConfig(dt=1e-3, T=50.0, sample_every=10))
        rep = autonomy_audit(traj, 1)
        assert rep.applicable
        assert rep.tail_deviation <= 1e-12
        assert rep.equilibrium_distance <= 1e-10

    def test_not_applicable_without_convergence(self):
        from hybridkuramoto import Ensemble, State, normalize_frame
        ens, _ = normalize_frame(Ensemble(
            N=2, n=2, m=[0, 0], d=[1, 1], omega=[0.8, -0.8], lam=1.0))
        traj = integrate(ens, State(t=0.0, theta=[0.3, 1.1], v=[]),
                         IntegratorConfig(dt=1e-3, T=100.0, sample_every=20))
        rep = autonomy_audit(traj, 0)
        assert not rep.applicable
        assert rep.equilibrium_distance is None
