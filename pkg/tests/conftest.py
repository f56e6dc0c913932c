import numpy as np
import pytest

from canspec import forward, oracles


@pytest.fixture(scope="session")
def free_pi():
    """Identity weight on [0, pi] with its analytic measure, window 200."""
    return oracles.free_fixture(np.pi, 200.0)


@pytest.fixture(scope="session")
def free_one():
    """Identity weight on [0, 1], window 200*pi (atoms at pi*k)."""
    return oracles.free_fixture(1.0, 200.0 * np.pi)


@pytest.fixture(scope="session")
def step_hamiltonian():
    return oracles.step_fixture(1.2)


@pytest.fixture(scope="session")
def step_measure(step_hamiltonian):
    return forward.spectral_measure(step_hamiltonian, 200.0)


@pytest.fixture(scope="session")
def step_measure_small(step_hamiltonian):
    return forward.spectral_measure(step_hamiltonian, 60.0)
