import numpy as np
import pytest

from mecce.config.settings import TWO_PI
from mecce.model import PulseSchedule, build_chain, build_disjoint_pairs

SHORT_GRID = np.linspace(0.0, 2.0, 21)


@pytest.fixture
def small_chain():
    """Four-spin dissipative chain whose singleton contributions stay away from zero."""
    return build_chain(
        4,
        0.5,
        1.0,
        7,
        gamma=0.05,
        initial="random-pure",
        time_grid=SHORT_GRID,
    )


@pytest.fixture
def echo_chain():
    return build_chain(
        3,
        0.3 * TWO_PI,
        0.5 * TWO_PI,
        11,
        gamma=0.2,
        exchange_rate=0.1,
        initial="random-pure",
        pulses=PulseSchedule(p=1),
        time_grid=np.linspace(0.0, 1.5, 7),
    )


@pytest.fixture
def pairs():
    return build_disjoint_pairs(2, 0.4 * TWO_PI, 0.15 * TWO_PI, 3, gamma=0.1, time_grid=SHORT_GRID)
