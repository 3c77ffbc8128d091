import numpy as np
import pytest

from mecce.config.settings import TWO_PI
from mecce.model import (
    BathSpin,
    BathState,
    CouplingGraph,
    JumpKind,
    JumpSpec,
    PulseSchedule,
    SystemSpec,
    build_chain,
    build_lattice2d,
    build_nv_surface,
    pulse_times,
)
from mecce.model.builders import (
    ELECTRON_DIPOLAR_CONSTANT,
    NV_AXIS,
    secular_dipolar_coupling,
)


class TestPulseTimes:
    def test_cpmg(self):
        assert pulse_times(PulseSchedule(p=2), 1.0) == pytest.approx([0.25, 0.75])

    def test_equidistant(self):
        schedule = PulseSchedule(p=2, timing="equidistant")
        assert pulse_times(schedule, 3.0) == pytest.approx([1.0, 2.0])

    def test_hahn_echo_at_half_time(self):
        assert pulse_times(PulseSchedule(p=1), 4.0) == pytest.approx([2.0])

    def test_free_evolution_has_no_pulses(self):
        assert pulse_times(PulseSchedule(), 5.0) == []

    def test_needs_total_time(self):
        with pytest.raises(ValueError, match="total_time"):
            pulse_times(PulseSchedule(p=1))

    def test_rejects_negative_count(self):
        with pytest.raises(ValueError):
            PulseSchedule(p=-1)


class TestCouplingGraph:
    def test_edges_are_canonical(self):
        graph = CouplingGraph(((2, 1, 0.5),))
        assert graph.edges == ((1, 2, 0.5),)

    def test_duplicate_edge(self):
        with pytest.raises(ValueError, match="duplicate"):
            CouplingGraph(((0, 1, 1.0), (1, 0, 2.0)))

    def test_self_loop(self):
        with pytest.raises(ValueError, match="self-loop"):
            CouplingGraph(((3, 3, 1.0),))

    def test_within(self):
        graph = CouplingGraph(((0, 1, 1.0), (1, 2, 2.0), (2, 3, 3.0)))
        assert graph.within([1, 2, 3]) == [(1, 2, 2.0), (2, 3, 3.0)]


class TestJumpSpec:
    def test_target_count(self):
        with pytest.raises(ValueError, match="target"):
            JumpSpec(JumpKind.EXCHANGE_UP, (0,), 1.0)

    def test_negative_rate(self):
        with pytest.raises(ValueError, match="rate"):
            JumpSpec(JumpKind.LOWER, (0,), -0.1)

    def test_kind_from_string(self):
        assert JumpSpec("raise", (1,), 0.2).kind is JumpKind.RAISE


class TestSystemSpec:
    def test_indices_must_be_contiguous(self):
        with pytest.raises(ValueError, match="in order"):
            SystemSpec(bath=(BathSpin(0, 1.0), BathSpin(2, 1.0)))

    def test_graph_inside_bath(self):
        with pytest.raises(ValueError, match="coupling graph"):
            SystemSpec(bath=(BathSpin(0, 1.0),), graph=CouplingGraph(((0, 1, 1.0),)))

    def test_time_grid_strictly_increasing(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            SystemSpec(bath=(BathSpin(0, 1.0),), time_grid=[0.0, 1.0, 1.0])

    def test_defaults_to_maximally_mixed(self):
        spec = SystemSpec(bath=(BathSpin(0, 1.0), BathSpin(1, 2.0)))
        assert spec.initial.kind == "maximally-mixed"
        assert not spec.is_dissipative

    def test_coherent_zeroes_rates(self):
        spec = build_chain(3, 1.0, 1.0, 0, gamma=0.3, exchange_rate=0.1)
        coherent = spec.coherent()
        assert spec.is_dissipative
        assert not coherent.is_dissipative
        assert len(coherent.jumps) == len(spec.jumps)

    def test_with_rate_adds_channels(self):
        spec = SystemSpec(bath=(BathSpin(0, 1.0), BathSpin(1, 2.0)))
        relaxed = spec.with_rate(0.25)
        assert len(relaxed.jumps) == 4
        assert all(jump.rate == 0.25 for jump in relaxed.jumps)

    def test_dict_round_trip(self):
        spec = build_chain(3, 1.0, 1.0, 5, gamma=0.1, initial="random-pure")
        restored = SystemSpec.from_dict(spec.to_dict())
        assert np.allclose(restored.couplings, spec.couplings)
        assert restored.graph == spec.graph
        assert restored.jumps == spec.jumps
        for a, b in zip(restored.initial.matrices, spec.initial.matrices, strict=True):
            assert np.allclose(a, b)


class TestBathState:
    def test_neel(self):
        state = BathState.neel(3)
        assert [m[0, 0].real for m in state.matrices] == [1.0, 0.0, 1.0]

    def test_random_product_is_reproducible(self):
        a = BathState.random_product(4, 9)
        b = BathState.random_product(4, 9)
        for x, y in zip(a.matrices, b.matrices, strict=True):
            assert np.array_equal(x, y)

    def test_rejects_non_unit_trace(self):
        with pytest.raises(ValueError, match="unit trace"):
            BathState.explicit([np.eye(2)])


class TestChain:
    def test_shape(self):
        spec = build_chain(5, 0.1 * TWO_PI, 2.0 * TWO_PI, 1)
        assert spec.n_spins == 5
        assert len(spec.graph) == 4
        assert np.all((spec.couplings >= 0) & (spec.couplings <= 2.0 * TWO_PI))
        assert all(0 <= c <= 0.1 * TWO_PI for _, _, c in spec.graph.edges)

    def test_periodic_closes_ring(self):
        assert len(build_chain(5, 1.0, 1.0, 1, periodic=True).graph) == 5

    def test_seeded(self):
        a = build_chain(6, 1.0, 1.0, 3)
        b = build_chain(6, 1.0, 1.0, 3)
        assert np.array_equal(a.couplings, b.couplings)
        assert a.graph == b.graph

    def test_exchange_jumps_per_bond(self):
        spec = build_chain(4, 1.0, 1.0, 0, gamma=0.1, exchange_rate=0.2)
        pair_jumps = [jump for jump in spec.jumps if jump.kind.n_targets == 2]
        assert len(pair_jumps) == 6


class TestLattice:
    def test_open_boundaries(self):
        spec = build_lattice2d(3, 1.0, 1.0, 0)
        assert spec.n_spins == 9
        assert len(spec.graph) == 12
        assert {c for _, _, c in spec.graph.edges} == {1.0}

    def test_periodic_boundaries(self):
        assert len(build_lattice2d(3, 1.0, 1.0, 0, periodic=True).graph) == 18

    def test_default_hahn_echo(self):
        assert build_lattice2d(2, 1.0, 1.0, 0).pulses.p == 1


class TestNVSurface:
    def test_dipolar_constant_in_mhz_nm3(self):
        assert ELECTRON_DIPOLAR_CONSTANT / TWO_PI == pytest.approx(52.04, rel=1e-3)

    def test_coupling_along_axis(self):
        coupling = secular_dipolar_coupling(2.0 * NV_AXIS, NV_AXIS, 8.0)
        assert coupling == pytest.approx(-2.0)

    def test_vanishes_at_magic_angle(self):
        theta = np.arccos(1.0 / np.sqrt(3.0))
        separation = 1.5 * np.array([np.sin(theta), 0.0, np.cos(theta)])
        axis = np.array([0.0, 0.0, 1.0])
        assert secular_dipolar_coupling(separation, axis) == pytest.approx(0.0, abs=1e-9)

    def test_inverse_cube_distance(self):
        separation = np.array([0.3, -0.4, 1.2])
        near = secular_dipolar_coupling(separation, NV_AXIS)
        assert secular_dipolar_coupling(2.0 * separation, NV_AXIS) == pytest.approx(near / 8.0)

    def test_coincident_spins(self):
        with pytest.raises(ValueError, match="coincident"):
            secular_dipolar_coupling(np.zeros(3), NV_AXIS)

    def test_couplings_follow_geometry(self):
        spec = build_nv_surface(5.0, 0.002, 100.0, 100.0, 4)
        positions = spec.positions
        assert spec.n_spins > 0
        assert np.allclose(positions[:, 2], 0.0)
        expected = secular_dipolar_coupling(positions - np.array([0.0, 0.0, -5.0]), NV_AXIS)
        assert np.allclose(spec.couplings, expected)
        i, j, coupling = spec.graph.edges[0]
        pair = secular_dipolar_coupling(positions[j] - positions[i], NV_AXIS)
        assert coupling == pytest.approx(-0.5 * pair)
        assert len(spec.graph) == spec.n_spins * (spec.n_spins - 1) // 2

    def test_relaxation_rate(self):
        spec = build_nv_surface(5.0, 0.002, 100.0, 100.0, 4)
        assert all(jump.rate == pytest.approx(0.005) for jump in spec.jumps)
        assert spec.initial.kind == "maximally-mixed"

    def test_empty_bath_warns(self):
        with pytest.warns(UserWarning, match="no spins"):
            spec = build_nv_surface(5.0, 1e-12, 100.0, 1.0, 0)
        assert spec.n_spins == 0

    def test_rejects_non_positive_density(self):
        with pytest.raises(ValueError, match="density"):
            build_nv_surface(5.0, 0.0, 100.0, 100.0, 0)
