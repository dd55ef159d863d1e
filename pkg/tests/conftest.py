import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rfrlab import HullWhiteParams, JumpSpec, PiecewiseConstant, Schedule  # noqa: E402

ATOMS = (0.25, 0.5, 1.0, 1.5)
JUMPS = ((0.5, 0.001, 0.005), (1.2, -0.002, 0.004))


@pytest.fixture
def base_schedule():
    """Roll-over dates and jump dates, with 0.5 in both sets."""
    return Schedule(ATOMS, (0.5, 1.2), 3.0)


@pytest.fixture
def base_params():
    return HullWhiteParams(0.02, -0.3, 0.01, 0.005, tuple(JumpSpec(*j) for j in JUMPS))


@pytest.fixture
def piecewise_params():
    return HullWhiteParams(0.02, -0.3, 0.01, PiecewiseConstant((0.7,), (0.004, 0.006)),
                           tuple(JumpSpec(*j) for j in JUMPS))


@pytest.fixture
def hedge_schedule():
    return Schedule((), (0.5, 0.8), 1.5)


@pytest.fixture
def hedge_params():
    return HullWhiteParams(0.02, -0.3, 0.01, 0.005, (JumpSpec(0.5, 0.001, 0.005), JumpSpec(0.8, -0.002, 0.004)))
