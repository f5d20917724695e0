import numpy as np
import pytest

from hybridkuramoto import (
    Ensemble,
    IntegratorConfig,
    ParameterError,
    State,
    brute_force_equilibria,
    delta_distance,
    delta_signature,
    enumerate_equilibria,
    gauge_anchor,
    integrate,
    normalize_frame,
    reconstruct_phases,
    self_consistency_roots,
    stationarity_residual,
)

from conftest import random_normalized_ensemble

R_HI = np.sqrt(2 + np.sqrt(3)) / 2   # locked-pair order parameter, acute branch
R_LO = np.sqrt(2 - np.sqrt(3)) / 2   # obtuse branch


def pair(lam=2.0):
    ens, _ = normalize_frame(Ensemble(
        N=2, n=2, m=[0, 0], d=[1, 1], omega=[0.5, -0.5], lam=lam))
    return ens


class TestSelfConsistencyRoots:
    def test_closed_form_quartic_roots(self):
        # equal-magnitude pair reduces to x^4 - 4 x^2 + 1 = 0
        roots = self_consistency_roots(pair(), (1, 1))
        assert len(roots) == 2
        np.testing.assert_allclose(
            sorted(roots), [np.sqrt(2 - np.sqrt(3)), np.sqrt(2 + np.sqrt(3))],
            atol=1e-11)

    def test_mixed_signs_cancel(self):
        assert self_consistency_roots(pair(), (1, -1)) == []
        assert self_consistency_roots(pair(), (-1, 1)) == []

    def test_subcritical_coupling_empty(self):
        ens, _ = normalize_frame(Ensemble(
            N=2, n=2, m=[0, 0], d=[1, 1], omega=[0.5, -0.5], lam=0.4))
        assert self_consistency_roots(ens, (1, 1)) == []

    def test_degenerate_frequencies_refused(self):
        ens = Ensemble(N=2, n=2, m=[0, 0], d=[1, 1], omega=[0, 0], lam=1.0)
        with pytest.raises(ParameterError):
            self_consistency_roots(ens, (1, 1))


class TestReconstructPhases:
    def test_acute_branch_gap(self):
        cls = reconstruct_phases(pair(), R_HI, (1, 1))
        gap = cls.Delta[0] - cls.Delta[1]   # psi_2 - psi_1
        assert gap == pytest.approx(-np.pi / 6, abs=1e-10)
        assert cls.residual <= 1e-9

    def test_obtuse_branch_gap(self):
        cls = reconstruct_phases(pair(), R_LO, (1, 1))
        assert cls.Delta[0] - cls.Delta[1] == pytest.approx(-5 * np.pi / 6, abs=1e-10)

    def test_class_invariants(self):
        rng = np.random.Generator(np.random.Philox(5))
        for _ in range(10):
            ens = random_normalized_ensemble(rng, N=int(rng.integers(2, 5)))
            for cls in enumerate_equilibria(ens).classes:
                x = ens.lam * cls.r
                np.testing.assert_allclose(np.sin(cls.Delta), -ens.omega / x, atol=1e-10)
                np.testing.assert_allclose(
                    np.cos(cls.Delta),
                    np.asarray(cls.sigma) * np.sqrt(1 - (ens.omega / x) ** 2),
                    atol=1e-10)
                assert abs(np.cos(cls.Delta).sum() - cls.r * ens.N) < 1e-9
                assert abs(np.sin(cls.Delta).sum()) < 1e-9
                assert cls.residual <= 1e-9
                assert ens.omega_max / ens.lam - 1e-12 <= cls.r <= 1 + 1e-12


class TestEnumerate:
    def test_locked_pair_classes(self):
        result = enumerate_equilibria(pair())
        assert len(result) == 2
        rs = [c.r for c in result.classes]
        np.testing.assert_allclose(rs, [R_HI, R_LO], atol=1e-10)
        gaps = [c.Delta[0] - c.Delta[1] for c in result.classes]
        np.testing.assert_allclose(gaps, [-np.pi / 6, -5 * np.pi / 6], atol=1e-10)

    def test_empty_between_thresholds(self):
        # omega_max < lam < 2 omega_max: the sweep itself discovers emptiness
        assert len(enumerate_equilibria(pair(lam=0.9))) == 0

    def test_infeasible_below_omega_max(self):
        result = enumerate_equilibria(pair(lam=0.4))
        assert len(result) == 0
        assert result.reason is not None

    def test_monotone_infeasibility_on_lambda_grid(self):
        emptiness = [len(enumerate_equilibria(pair(lam=lam))) == 0
                     for lam in (0.3, 0.6, 0.9, 0.95, 1.05, 1.5, 2.0)]
        # once nonempty, stays nonempty as lambda grows
        assert emptiness == sorted(emptiness, reverse=True)

    def test_identical_frequencies_census(self):
        # coherent + three two-cluster states + two splay orientations
        ens = Ensemble(N=3, n=3, m=[0, 0, 0], d=[1, 1, 1], omega=[0, 0, 0], lam=1.0)
        result = enumerate_equilibria(ens)
        assert not result.degenerate_family
        rs = sorted((c.r for c in result.classes), reverse=True)
        np.testing.assert_allclose(rs, [1.0, 1 / 3, 1 / 3, 1 / 3, 0.0, 0.0], atol=1e-9)
        assert sum(c.degenerate for c in result.classes) == 2
        for c in result.classes:
            assert c.residual <= 1e-9

    def test_identical_frequencies_large_n_flagged(self):
        ens = Ensemble(N=4, n=4, m=[0] * 4, d=[1] * 4, omega=[0] * 4, lam=1.0)
        result = enumerate_equilibria(ens)
        assert result.degenerate_family
        assert all(c.r > 0 for c in result.classes)

    def test_resolution_invariance(self):
        rng = np.random.Generator(np.random.Philox(17))
        ens = random_normalized_ensemble(rng, N=3)
        a = enumerate_equilibria(ens, cells=4096)
        b = enumerate_equilibria(ens, cells=8192)
        assert len(a) == len(b)
        for ca, cb in zip(a.classes, b.classes):
            assert delta_distance(ca.Delta, cb.Delta) < 1e-8

    def test_sweep_budget_refused(self):
        N = 21
        omega = np.zeros(N)
        omega[0], omega[1] = 0.5, -0.5
        ens = Ensemble(N=N, n=N, m=np.zeros(N), d=np.ones(N), omega=omega, lam=3.0)
        with pytest.raises(ParameterError, match="N > 20|N=20"):
            enumerate_equilibria(ens)

    def test_residuals_under_model_check(self):
        rng = np.random.Generator(np.random.Philox(23))
        ens = random_normalized_ensemble(rng, N=4)
        for cls in enumerate_equilibria(ens).classes:
            res = np.abs(stationarity_residual(ens, cls.representative)).max()
            assert res <= 1e-9


class TestGaugeAnchor:
    def test_no_shift_needed(self):
        ens = pair()
        cls = enumerate_equilibria(ens).classes[0]
        C0 = float(ens.d @ cls.representative)
        np.testing.assert_allclose(gauge_anchor(cls, ens, C0), cls.representative)

    def test_arithmetic_shift(self):
        ens = Ensemble(N=2, n=2, m=[0, 0], d=[1.0, 1.0], omega=[0.5, -0.5], lam=2.0)
        cls = enumerate_equilibria(ens).classes[0]
        # replace the representative by (0, pi) scenario via a direct check
        psi = np.array([0.0, np.pi])
        s = (0.0 - float(ens.d @ psi)) / float(ens.d.sum())
        assert s == pytest.approx(-np.pi / 2)
        np.testing.assert_allclose(psi + s, [-np.pi / 2, np.pi / 2])
        assert float(ens.d @ gauge_anchor(cls, ens, 0.0)) == pytest.approx(0.0, abs=1e-12)

    def test_anchored_representative_matches_converged_run(self, hybrid_three_ensemble):
        # perturb the anchored representative without touching the conserved
        # sum; the run must relax back onto the same anchored point
        ens = hybrid_three_ensemble
        cls = enumerate_equilibria(ens).classes[0]
        anchored = gauge_anchor(cls, ens, C0=2.0)
        rng = np.random.Generator(np.random.Philox(99))
        delta = rng.normal(0.0, 0.05, ens.N)
        delta -= ens.d * (delta @ ens.d) / (ens.d @ ens.d)
        traj = integrate(ens, State(t=0.0, theta=anchored + delta, v=np.zeros(2)),
                         IntegratorConfig(dt=1e-3, T=200.0, sample_every=100))
        assert np.abs(traj.theta[-1] - anchored).max() < 1e-5


class TestBruteForce:
    def test_locked_pair_roots(self):
        roots = brute_force_equilibria(pair())
        assert len(roots) == 2
        psi2 = sorted(r[1] for r in roots)
        np.testing.assert_allclose(
            psi2, [2 * np.pi - 5 * np.pi / 6, 2 * np.pi - np.pi / 6], atol=1e-8)

    def test_identical_pair(self):
        ens = Ensemble(N=2, n=2, m=[0, 0], d=[1, 1], omega=[0, 0], lam=1.0)
        roots = brute_force_equilibria(ens)
        psi2 = sorted(r[1] for r in roots)
        np.testing.assert_allclose(psi2, [0.0, np.pi], atol=1e-8)

    def test_refused_above_four(self):
        ens = Ensemble(N=5, n=5, m=[0] * 5, d=[1] * 5,
                       omega=[0.1, 0.2, -0.1, -0.1, -0.1], lam=2.0)
        with pytest.raises(ParameterError):
            brute_force_equilibria(ens)

    def test_agreement_with_enumeration(self):
        rng = np.random.Generator(np.random.Philox(41))
        for _ in range(5):
            ens = random_normalized_ensemble(rng, N=int(rng.integers(2, 4)),
                                             lam_factor=float(rng.uniform(2.0, 4.0)))
            classes = enumerate_equilibria(ens).classes
            roots = brute_force_equilibria(ens)
            assert len(classes) == len(roots)
            for psi in roots:
                sig = delta_signature(psi)
                assert min(delta_distance(sig, c.Delta) for c in classes) < 1e-6

    def test_four_oscillator_grid(self):
        # exercises the 3-axis scan; this draw has saddle branches with
        # mixed cosine signs alongside the two all-plus classes
        rng = np.random.Generator(np.random.Philox(4))
        d = rng.uniform(0.5, 2.0, 4)
        om = rng.uniform(-1, 1, 4)
        om -= d * om.sum() / d.sum()
        ens, _ = normalize_frame(Ensemble(
            N=4, n=2, m=[0, 0, 1.0, 1.5], d=d, omega=om,
            lam=3.0 * float(np.abs(om).max())))
        classes = enumerate_equilibria(ens).classes
        roots = brute_force_equilibria(ens)
        assert len(classes) == len(roots) == 4
        assert any(-1 in c.sigma for c in classes)
        for psi in roots:
            sig = delta_signature(psi)
            assert min(delta_distance(sig, c.Delta) for c in classes) < 1e-6
