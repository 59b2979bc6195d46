import numpy as np
import pytest

from sideband_tomo.schemas import CavityParams, StationaryBeamMoments, TwoBeamCrossMoments
from sideband_tomo.services import scan_io


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size calibration runs")


@pytest.fixture
def vacuum():
    return StationaryBeamMoments.vacuum()


@pytest.fixture
def pump():
    return StationaryBeamMoments(alpha=1.30, beta=1.07, gamma=-0.07, delta=-0.04)


@pytest.fixture
def signal():
    return StationaryBeamMoments(alpha=1.52, beta=2.87, gamma=-0.02, delta=0.34)


@pytest.fixture
def experiment_cavity():
    return CavityParams(d=0.85, omega_ratio=21 / 12)


@pytest.fixture
def fixture_state():
    return scan_io.fixture_moments()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_stationary(rng, delta=None) -> StationaryBeamMoments:
    """A physical stationary beam: a squeezed thermal S/A pair with a little imbalance."""
    thermal = rng.uniform(1.0, 2.0)
    squeeze = rng.uniform(-0.6, 0.6)
    angle = rng.uniform(0, np.pi)
    c, s = np.cos(angle), np.sin(angle)
    a = thermal * np.exp(squeeze)
    b = thermal * np.exp(-squeeze)
    alpha = c * c * a + s * s * b
    beta = s * s * a + c * c * b
    gamma = c * s * (a - b)
    if delta is None:
        # keeps every symplectic eigenvalue above 1 for thermal >= 1
        delta = rng.uniform(-0.1, 0.1) * (thermal - 1)
    return StationaryBeamMoments(alpha=alpha, beta=beta, gamma=gamma, delta=delta)


def random_cross(rng, scale=0.1) -> TwoBeamCrossMoments:
    return TwoBeamCrossMoments.from_vector(rng.uniform(-scale, scale, 8))
