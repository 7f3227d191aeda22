import numpy as np
import pytest

from chainllt import Observable, center, make_model


@pytest.fixture(scope="session")
def ref_model():
    """Symmetric two-state chain with unit rates; eigenvalues {0, -2}."""
    return make_model([[-1.0, 1.0], [1.0, -1.0]], ("up", "down"))


@pytest.fixture(scope="session")
def ref_obs(ref_model):
    """b = (1, -1), constant in the time argument, nu-centered."""
    coeffs = np.zeros((1, 2, 1))
    coeffs[0, 0, 0] = 1.0
    coeffs[0, 1, 0] = -1.0
    return center(Observable(coeffs), ref_model.nu)


@pytest.fixture(scope="session")
def mod_obs(ref_model):
    """Time-modulated variant (1 + alpha) (1, -1); genuinely window-dependent."""
    coeffs = np.zeros((1, 2, 2))
    coeffs[0, 0] = [1.0, 1.0]
    coeffs[0, 1] = [-1.0, -1.0]
    return center(Observable(coeffs), ref_model.nu)


@pytest.fixture(scope="session")
def asym_model():
    """Two-state chain with rates 1 and 2; nu = (2/3, 1/3)."""
    return make_model([[-1.0, 1.0], [2.0, -2.0]])


@pytest.fixture(scope="session")
def asym_obs(asym_model):
    """Centered indicator-type observable on the asymmetric chain."""
    coeffs = np.zeros((1, 2, 1))
    coeffs[0, 0, 0] = 1.0
    return center(Observable(coeffs), asym_model.nu)


@pytest.fixture(scope="session")
def cycle3_model():
    """Three-state cycle with unit rates; nu uniform."""
    return make_model([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]])
