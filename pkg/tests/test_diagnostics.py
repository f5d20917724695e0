import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybridkuramoto import (
    IntegratorConfig,
    ParameterError,
    State,
    energy_ledger,
    integrate,
    landau_kolmogorov_check,
    order_parameter,
    phase_diameter,
    random_initial_state,
    unwrap_angles,
    velocity_envelope_check,
    velocity_envelope_report,
)
from hybridkuramoto.model import Ensemble, normalize_frame

from conftest import random_normalized_ensemble

TWO_PI = 2 * np.pi


class TestOrderParameter:
    def test_coherent(self):
        s = order_parameter(np.full(5, 0.7))
        assert s.R == pytest.approx(1.0, abs=1e-14)
        assert s.Theta == pytest.approx(0.7, abs=1e-14)

    def test_antipodal(self):
        assert order_parameter([0.0, np.pi]).R < 1e-15

    def test_quarter_turn_pair(self):
        s = order_parameter([0.0, np.pi / 2])
        assert s.R == pytest.approx(np.sqrt(2) / 2, abs=1e-14)
        assert s.Theta == pytest.approx(np.pi / 4, abs=1e-14)

    @given(st.integers(0, 2 ** 32 - 1), st.floats(-30, 30))
    def test_shift_invariance_and_equivariance(self, seed, c):
        rng = np.random.Generator(np.random.Philox(seed))
        theta = rng.uniform(0, TWO_PI, int(rng.integers(1, 9)))
        a = order_parameter(theta)
        b = order_parameter(theta + c)
        assert b.R == pytest.approx(a.R, abs=1e-12)
        if a.R > 1e-6:
            gap = np.angle(np.exp(1j * (b.Theta - a.Theta - c)))
            assert abs(gap) < 1e-9

    @given(st.integers(0, 2 ** 32 - 1))
    def test_permutation_invariance(self, seed):
        rng = np.random.Generator(np.random.Philox(seed))
        theta = rng.uniform(0, TWO_PI, 6)
        perm = rng.permutation(6)
        assert order_parameter(theta[perm]).R == pytest.approx(
            order_parameter(theta).R, abs=1e-14)

    @given(st.integers(0, 2 ** 32 - 1))
    def test_magnitude_consistency(self, seed):
        rng = np.random.Generator(np.random.Philox(seed))
        s = order_parameter(rng.uniform(0, TWO_PI, 5))
        assert 0.0 <= s.R <= 1.0 + 1e-14
        assert abs(s.R ** 2 - (s.Z_re ** 2 + s.Z_im ** 2)) < 1e-14


class TestUnwrapAngles:
    def test_already_continuous(self):
        np.testing.assert_allclose(unwrap_angles([0.1, 0.2, 0.3]), [0.1, 0.2, 0.3])

    def test_crossing_pi(self):
        np.testing.assert_allclose(unwrap_angles([3.0, -3.0]), [3.0, TWO_PI - 3.0])

    def test_multi_step(self):
        np.testing.assert_allclose(
            unwrap_angles([0.0, 2.5, 5.0, 1.2]), [0.0, 2.5, 5.0, TWO_PI + 1.2])

    def test_first_value_in_principal_interval(self):
        out = unwrap_angles([-0.5, -0.4])
        assert 0.0 <= out[0] < TWO_PI
        np.testing.assert_allclose(np.diff(out), [0.1], atol=1e-14)

    def test_low_magnitude_samples_held(self):
        angles = np.array([0.2, 2.9, 0.4])
        R = np.array([1.0, 1e-12, 1.0])
        out = unwrap_angles(angles, R=R)
        assert out[1] == out[0]
        assert out[2] == pytest.approx(0.4, abs=1e-14)  # diff vs last valid raw

    @given(st.integers(0, 2 ** 32 - 1))
    def test_round_trip_of_continuous_series(self, seed):
        rng = np.random.Generator(np.random.Philox(seed))
        steps = rng.uniform(-3.0, 3.0, 60)
        true = np.concatenate([[rng.uniform(0, TWO_PI)], ]) + np.concatenate(
            [[0.0], np.cumsum(steps)])
        principal = np.angle(np.exp(1j * true))
        out = unwrap_angles(principal)
        np.testing.assert_allclose(np.diff(out), np.diff(true), atol=1e-9)


class TestPhaseDiameter:
    def test_identical(self):
        assert phase_diameter([1.2, 1.2, 1.2]) == 0.0

    def test_spread(self):
        assert phase_diameter([0.0, 1.0, -2.0]) == 3.0

    def test_running_sup_bounded_on_synchronizing_run(self, two_osc_ensemble):
        traj = integrate(two_osc_ensemble, random_initial_state(two_osc_ensemble, 2),
                         IntegratorConfig(dt=1e-3, T=100.0, sample_every=10))
        diam = np.array([phase_diameter(th) for th in traj.theta])
        running = np.maximum.accumulate(diam)
        assert running[-1] <= diam[-1] + diam.max() + 1e-12
        # growth stops: the last tenth adds nothing measurable
        assert running[-1] - running[int(0.9 * len(running))] < 1e-8


class TestEnergyLedger:
    def test_zero_at_start_exactly(self, hybrid_three_ensemble):
        traj = integrate(hybrid_three_ensemble,
                         random_initial_state(hybrid_three_ensemble, 5),
                         IntegratorConfig(dt=1e-3, T=1.0, sample_every=10))
        assert traj.energy_residual[0] == 0.0

    def test_stationary_run_identically_zero(self):
        ens = Ensemble(N=3, n=1, m=[0, 1.0, 2.0], d=[1, 1, 1],
                       omega=[0, 0, 0], lam=1.5)
        traj = integrate(ens, State(t=0.0, theta=[0.4, 0.4, 0.4], v=[0.0, 0.0]),
                         IntegratorConfig(dt=1e-3, T=5.0, sample_every=1))
        assert np.abs(traj.energy_residual).max() < 1e-14

    def test_trapezoid_scaling(self):
        rng = np.random.Generator(np.random.Philox(13))
        ens = random_normalized_ensemble(rng, N=4)
        init = State(t=0.0, theta=rng.uniform(0, TWO_PI, 4),
                     v=rng.uniform(-1, 1, ens.n_inertial))
        res = {}
        for dt in (1e-3, 5e-4):
            traj = integrate(ens, init, IntegratorConfig(dt=dt, T=10.0, sample_every=1))
            res[dt] = np.abs(traj.energy_residual).max()
        assert res[1e-3] < 1e-5
        assert res[1e-3] / res[5e-4] == pytest.approx(4.0, abs=1.0)

    def test_matches_stored_column(self, hybrid_three_ensemble):
        traj = integrate(hybrid_three_ensemble,
                         random_initial_state(hybrid_three_ensemble, 6),
                         IntegratorConfig(dt=1e-3, T=2.0, sample_every=5))
        np.testing.assert_array_equal(energy_ledger(traj), traj.energy_residual)


class TestTrajectoryAngleColumn:
    def test_unwrapped_mean_phase_is_continuous(self, hybrid_three_ensemble):
        traj = integrate(hybrid_three_ensemble,
                         random_initial_state(hybrid_three_ensemble, 12),
                         IntegratorConfig(dt=1e-3, T=50.0, sample_every=10))
        valid = traj.R >= 1e-8
        steps = np.abs(np.diff(traj.Theta))[valid[1:] & valid[:-1]]
        assert steps.max() < np.pi
        assert 0.0 <= traj.Theta[0] < TWO_PI


class TestLandauKolmogorov:
    def test_sine_known_sups(self):
        t = np.arange(0.0, 20 * np.pi, 1e-3)
        rep = landau_kolmogorov_check(np.sin(t), 1e-3)
        assert rep.sup_f == pytest.approx(1.0, abs=1e-4)
        assert rep.sup_df == pytest.approx(1.0, abs=1e-4)
        assert rep.sup_d2f == pytest.approx(1.0, abs=1e-4)
        assert rep.satisfied

    def test_constant(self):
        rep = landau_kolmogorov_check(np.full(100, 2.7), 1e-3)
        assert rep.sup_f == 2.7
        assert rep.sup_df == pytest.approx(0.0, abs=1e-9)
        assert rep.sup_d2f == pytest.approx(0.0, abs=1e-6)
        assert rep.satisfied

    def test_scaled_sine_analytic_sups(self):
        A, k = 0.3, 7.0
        t = np.arange(0.0, 20 * np.pi, 1e-3)
        rep = landau_kolmogorov_check(A * np.sin(k * t), 1e-3)
        assert rep.sup_f == pytest.approx(A, abs=1e-4)
        assert rep.sup_df == pytest.approx(A * k, abs=1e-4)
        assert rep.sup_d2f == pytest.approx(A * k * k, abs=1e-4)
        assert rep.satisfied  # sup|f'| = Ak <= 2 sqrt(A * A k^2) = 2Ak

    def test_too_few_samples(self):
        with pytest.raises(ParameterError):
            landau_kolmogorov_check(np.ones(4), 1e-3)

    def test_random_trig_polynomials_never_violate(self):
        rng = np.random.Generator(np.random.Philox(77))
        t = np.arange(0.0, 20 * np.pi, 1e-3)
        for _ in range(20):
            n_modes = int(rng.integers(1, 6))
            f = np.zeros_like(t)
            for _ in range(n_modes):
                f += rng.uniform(0, 1) * np.sin(rng.integers(1, 11) * t + rng.uniform(0, TWO_PI))
            assert landau_kolmogorov_check(f, 1e-3).satisfied


class TestVelocityEnvelope:
    def test_rest_point_never_violates(self):
        ens = Ensemble(N=2, n=1, m=[0, 1.0], d=[1, 1], omega=[0, 0], lam=1.0)
        traj = integrate(ens, State(t=0.0, theta=[0.3, 0.3], v=[0.0]),
                         IntegratorConfig(dt=1e-3, T=5.0, sample_every=10))
        assert velocity_envelope_check(ens, traj).max() <= 0.0

    def test_first_order_bound_at_saturation(self):
        # omega_j = lam, d_j = 2: bound (|omega|+lam)/d equals lam exactly
        ens, _ = normalize_frame(Ensemble(
            N=2, n=2, m=[0, 0], d=[2.0, 2.0], omega=[1.0, -1.0], lam=1.0))
        traj = integrate(ens, State(t=0.0, theta=[0.0, 2.5], v=[]),
                         IntegratorConfig(dt=1e-3, T=50.0, sample_every=10))
        freqs = traj.frequencies()
        assert np.abs(freqs[:, 0]).max() <= ens.lam
        assert velocity_envelope_check(ens, traj).max() <= 0.0

    def test_random_runs_stay_inside(self):
        rng = np.random.Generator(np.random.Philox(31))
        ens = random_normalized_ensemble(rng, N=4)
        init = State(t=0.0, theta=rng.uniform(0, TWO_PI, 4),
                     v=rng.uniform(-1, 1, ens.n_inertial))
        traj = integrate(ens, init, IntegratorConfig(dt=1e-3, T=50.0, sample_every=10))
        assert velocity_envelope_check(ens, traj).max() <= 1e-6

    def test_report_carries_both_saturation_levels(self, hybrid_three_ensemble):
        ens = hybrid_three_ensemble
        traj = integrate(ens, random_initial_state(ens, 9),
                         IntegratorConfig(dt=1e-3, T=5.0, sample_every=10))
        rep = velocity_envelope_report(ens, traj)
        assert len(rep["saturation_over_damping"]) == ens.N
        assert rep["saturation_over_inertia"][0] is None  # first-order slot
        assert rep["saturation_over_inertia"][ens.n] == pytest.approx(
            (abs(ens.omega[ens.n]) + ens.lam) / ens.m[ens.n])
        assert rep["max_violation"] <= 1e-6
