import numpy as np
import pytest


def fd_grad(f, theta: float, h: float = 1e-5) -> float:
    """Central finite-difference first derivative."""
    return (f(theta + h) - f(theta - h)) / (2.0 * h)


def fd_hess(f, theta: float, h: float = 1e-4) -> float:
    """Central finite-difference second derivative of the value."""
    return (f(theta + h) - 2.0 * f(theta) + f(theta - h)) / (h * h)


def rel_err(analytic: float, numeric: float) -> float:
    """Relative error with a unit floor so near-zero derivatives compare
    on an absolute scale."""
    return abs(analytic - numeric) / max(1.0, abs(analytic))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
