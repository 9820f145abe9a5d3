import numpy as np
import pytest

from ompsd import DeviceParams


@pytest.fixture
def device():
    """Stock device: 662.7 kHz resonator, 4.2 MHz cavity, 2.5 Hz damping."""
    return DeviceParams.from_hz(f_m=662.7e3, gamma_m=2.5, gamma_c=4.2e6,
                                coupling=0.013, gamma2_norm=2.0e-4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)
