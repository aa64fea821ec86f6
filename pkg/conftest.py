import sys
from os.path import dirname
sys.path.insert(0, dirname(__file__))

import numpy as np
import pytest

from ubf.channel import generate
from ubf.objective import SystemParams


@pytest.fixture
def sys_params():
    return SystemParams()


@pytest.fixture
def small_sys():
    return SystemParams(k_users=2, m_antennas=3, p_max=1.0, noise_var=0.1)


@pytest.fixture
def channels():
    return generate(7, 16, 4, 8).channels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
