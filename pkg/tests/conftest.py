import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from matchq import NSystemParams

settings.register_profile(
    "matchq",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("matchq")

rates = st.floats(min_value=0.1, max_value=10.0, allow_nan=False, allow_infinity=False)
thetas = st.floats(min_value=0.05, max_value=5.0, allow_nan=False, allow_infinity=False)

params_with_reneging = st.builds(
    NSystemParams, lambda1=rates, lambda2=rates, mu1=rates, mu2=rates,
    theta_s=thetas, theta_d=thetas,
)


def random_params(n: int, seed: int = 20240809, theta_s_zero: bool = False):
    """Deterministic batch of valid parameter sets for identity sweeps."""
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    while len(out) < n:
        l1, l2, m1, m2 = rng.uniform(0.2, 3.0, size=4)
        ths, thd = rng.uniform(0.1, 2.5, size=2)
        p = NSystemParams(l1, l2, m1, m2, 0.0 if theta_s_zero else ths, thd)
        if theta_s_zero and not (l1 + l2 < m1 + m2 and l2 < m2):
            continue
        out.append(p)
    return out


@pytest.fixture(scope="session")
def reference_params() -> NSystemParams:
    return NSystemParams(1.0, 1.0, 2.0, 2.0, theta_s=1.0)


@pytest.fixture(scope="session")
def reference_two_sided() -> NSystemParams:
    return NSystemParams(1.0, 1.0, 2.0, 2.0, theta_s=1.0, theta_d=1.0)
