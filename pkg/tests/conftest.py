import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20120701)


def random_pd(rng, H, lo=1.0, hi=3.0):
    """Symmetric positive definite matrix with eigenvalues in [lo, hi]."""
    Q, _ = np.linalg.qr(rng.standard_normal((H, H)))
    return (Q * rng.uniform(lo, hi, H)) @ Q.T


def random_psd(rng, H, rank=None):
    M = rng.standard_normal((H, rank or H))
    return M @ M.T / H
