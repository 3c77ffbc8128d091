import numpy as np
import pytest

from mecce.config.settings import TWO_PI
from mecce.engine.exact import exact_coherence, exact_unprojected, full_liouvillian
from mecce.model import (
    BathState,
    PulseSchedule,
    SystemSpec,
    build_chain,
    exchange_jumps,
)
from mecce.utils.operator_algebra import unvec, vec


@pytest.fixture
def dissipative_chain():
    spec = build_chain(
        3,
        0.4 * TWO_PI,
        0.8 * TWO_PI,
        4,
        gamma=0.3,
        exchange_rate=0.2,
        initial="random-pure",
        time_grid=np.linspace(0.0, 1.0, 6),
    )
    return spec


def test_empty_bath_keeps_full_coherence():
    spec = SystemSpec(bath=(), time_grid=np.linspace(0.0, 1.0, 5))
    assert np.array_equal(exact_coherence(spec).values, np.ones(5))


def test_exact_cap():
    with pytest.raises(ValueError, match="capped"):
        exact_coherence(build_chain(13, 1.0, 1.0, 0))


def test_unprojected_caps():
    with pytest.raises(ValueError, match="capped"):
        exact_unprojected(build_chain(11, 1.0, 1.0, 0))
    with pytest.raises(ValueError, match="at least one"):
        exact_unprojected(SystemSpec(bath=()))


def test_exact_metadata(dissipative_chain):
    curve = exact_coherence(dissipative_chain)
    assert curve.metadata["method"] == "exact"
    assert curve.metadata["order"] == 3
    assert curve.values[0] == pytest.approx(1.0)


def test_full_liouvillian_preserves_trace(dissipative_chain):
    rng = np.random.default_rng(0)
    m = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    derivative = unvec(full_liouvillian(dissipative_chain) @ vec(rho), 16, 16)
    assert abs(np.trace(derivative)) < 1e-10


@pytest.mark.parametrize("p", [0, 1, 2])
def test_unprojected_matches_projected(dissipative_chain, p):
    schedule = PulseSchedule(p=p)
    report = exact_unprojected(dissipative_chain, schedule=schedule)
    projected = exact_coherence(dissipative_chain, schedule)
    assert report.curve.max_deviation(projected) < 1e-9


def test_unprojected_state_stays_physical(dissipative_chain):
    report = exact_unprojected(dissipative_chain, schedule=PulseSchedule(p=1))
    assert report.max_trace_error < 1e-10
    assert report.min_eigenvalue > -1e-10
    assert np.all(report.curve.magnitude <= 1.0 + 1e-9)


def test_unprojected_with_mixed_explicit_state():
    base = build_chain(2, 0.5 * TWO_PI, 0.5 * TWO_PI, 1, time_grid=np.linspace(0.0, 2.0, 5))
    tilted = np.array([[0.7, 0.1 - 0.2j], [0.1 + 0.2j, 0.3]])
    spec = base.replace(
        initial=BathState.explicit([tilted, 0.5 * np.eye(2)]),
        jumps=exchange_jumps([(0, 1)], 0.4),
    )
    report = exact_unprojected(spec)
    assert report.curve.max_deviation(exact_coherence(spec)) < 1e-9


@pytest.mark.parametrize("p", [0, 1, 3])
def test_exact_coherence_is_bounded(dissipative_chain, p):
    curve = exact_coherence(dissipative_chain, PulseSchedule(p=p))
    assert np.max(curve.magnitude) <= 1.0 + 1e-8
