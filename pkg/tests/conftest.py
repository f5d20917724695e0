import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def two_osc_ensemble():
    """Classic locked pair: omega = (0.5, -0.5), lam = 2."""
    from hybridkuramoto import Ensemble, normalize_frame
    ens, _ = normalize_frame(
        Ensemble(N=2, n=2, m=[0.0, 0.0], d=[1.0, 1.0], omega=[0.5, -0.5], lam=2.0))
    return ens


@pytest.fixture(scope="session")
def hybrid_three_ensemble():
    """Mixed ensemble: one overdamped + two inertial oscillators."""
    from hybridkuramoto import Ensemble, normalize_frame
    ens, _ = normalize_frame(
        Ensemble(N=3, n=1, m=[0.0, 1.0, 1.5], d=[1.0, 0.8, 1.2],
                 omega=[0.3, -0.15, -0.1], lam=1.6))
    return ens


def random_normalized_ensemble(rng, N=None, n=None, lam_factor=4.0):
    from hybridkuramoto import Ensemble, normalize_frame
    if N is None:
        N = int(rng.integers(2, 7))
    if n is None:
        n = int(rng.integers(0, N + 1))
    d = rng.uniform(0.5, 2.0, N)
    m = np.zeros(N)
    m[n:] = rng.uniform(0.5, 2.0, N - n)
    while True:
        omega = rng.uniform(-1.0, 1.0, N)
        omega = omega - d * (omega.sum() / d.sum())
        if np.abs(omega).max() > 1e-3:
            break
    ens = Ensemble(N=N, n=n, m=m, d=d, omega=omega,
                   lam=lam_factor * float(np.abs(omega).max()))
    return normalize_frame(ens)[0]
