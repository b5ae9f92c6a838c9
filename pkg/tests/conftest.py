import pytest

from exopt.model import JumpSpec, ModelParams


@pytest.fixture
def params():
    """Baseline admissible parameter set used across the suite."""
    return ModelParams(
        sigma1=0.25, sigma2=0.18, rho_w=0.35, rho1=-0.5, rho2=-0.3,
        xi=2.2, eta=0.04, omega=0.35, Lambda=0.15,
        q1=0.03, q2=0.01, r=0.05, T=1.0,
    )


@pytest.fixture
def jumps():
    """Pricing-measure jump pair: moderate intensity, asymmetric sizes."""
    j1 = JumpSpec(lambda_tilde=0.6, gamma=-0.08, delta=0.18)
    j2 = JumpSpec(lambda_tilde=0.4, gamma=0.05, delta=0.12)
    return j1, j2


@pytest.fixture
def no_jumps():
    j0 = JumpSpec(lambda_tilde=0.0, gamma=0.0, delta=0.10)
    return j0, j0
