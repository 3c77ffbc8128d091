import numpy as np
import pytest

from mecce.config.settings import PROPAGATOR_CACHE_SIZE
from mecce.engine import lindblad
from mecce.engine.lindblad import (
    BranchHamiltonians,
    ClusterPropagator,
    GeneratorExponential,
    build_generator,
    cluster_indices,
    dissipation_frobenius,
    plan_segments,
    project_hamiltonians,
    propagate,
    propagate_curve,
    single_spin_analytic,
    vectorized_trace,
)
from mecce.model import (
    BathSpin,
    CouplingGraph,
    JumpKind,
    JumpSpec,
    PulseSchedule,
    SystemSpec,
    build_chain,
    relaxation_jumps,
)
from mecce.utils.operator_algebra import expm


def single_spin(a: float, gamma: float, grid) -> SystemSpec:
    return SystemSpec(bath=(BathSpin(0, a),), jumps=relaxation_jumps(1, gamma), time_grid=grid)


class TestHamiltonians:
    def test_branches_differ_by_secular_field(self):
        spec = build_chain(3, 1.0, 2.0, 0)
        branches = project_hamiltonians(spec, (0, 1, 2))
        field = (branches.h0 - branches.h1).toarray()
        assert np.allclose(field, np.diag(np.diag(field)))
        assert field[0, 0] == pytest.approx(0.5 * spec.couplings.sum())

    def test_xxz_matrix_elements(self):
        coupling = 0.8
        spec = SystemSpec(
            bath=(BathSpin(0, 0.0), BathSpin(1, 0.0)),
            graph=CouplingGraph(((0, 1, coupling),)),
        )
        h0 = project_hamiltonians(spec, (0, 1)).h0.toarray()
        # basis |uu>, |ud>, |du>, |dd>
        assert h0[1, 2] == pytest.approx(0.5 * coupling)
        assert h0[0, 0] == pytest.approx(-0.5 * coupling)
        assert h0[1, 1] == pytest.approx(0.5 * coupling)

    def test_only_internal_edges(self):
        spec = build_chain(3, 1.0, 2.0, 0)
        single = project_hamiltonians(spec, (1,))
        assert single.dim == 2
        assert np.allclose(single.h0.toarray(), np.diag([0.25, -0.25]) * spec.couplings[1])

    def test_rejects_cluster_outside_bath(self):
        spec = build_chain(2, 1.0, 2.0, 0)
        with pytest.raises(ValueError, match="outside bath"):
            project_hamiltonians(spec, (1, 2))

    def test_rejects_empty_cluster(self):
        with pytest.raises(ValueError, match="empty"):
            project_hamiltonians(build_chain(2, 1.0, 2.0, 0), ())


class TestGenerator:
    def test_jumps_outside_cluster_are_skipped(self):
        spec = build_chain(3, 1.0, 2.0, 0, gamma=0.0, exchange_rate=0.5)
        branches = project_hamiltonians(spec, (0,))
        with_jumps = build_generator(branches, spec.jumps)
        without = build_generator(branches, ())
        assert np.allclose(with_jumps.g01.toarray(), without.g01.toarray())

    def test_branch_swap(self):
        spec = build_chain(2, 1.0, 2.0, 0, gamma=0.1)
        generator = build_generator(project_hamiltonians(spec, (0, 1)), spec.jumps)
        assert generator.branch("01") is generator.g01
        assert generator.branch("10") is generator.g10
        with pytest.raises(ValueError):
            generator.branch("11")

    def test_swapped_branches_swap_generators(self):
        spec = build_chain(2, 1.0, 2.0, 3, gamma=0.1, exchange_rate=0.2)
        branches = project_hamiltonians(spec, (0, 1))
        generator = build_generator(branches, spec.jumps)
        swapped = build_generator(
            BranchHamiltonians(branches.h1, branches.h0, branches.indices), spec.jumps
        )
        assert np.allclose(swapped.g01.toarray(), generator.g10.toarray())
        assert np.allclose(swapped.g10.toarray(), generator.g01.toarray())

    def test_dissipation_norm(self):
        jumps = (JumpSpec(JumpKind.LOWER, (0,), 0.3), JumpSpec(JumpKind.RAISE, (1,), 0.2))
        # identity on the spectator site doubles the squared norm of I+ I-
        assert dissipation_frobenius(jumps, (0, 1)) == pytest.approx(0.3 * np.sqrt(2.0))
        assert dissipation_frobenius(jumps, (2,)) == 0.0

    def test_cluster_indices(self):
        assert cluster_indices([3, 1, 2]) == (1, 2, 3)


class TestSegments:
    def test_cpmg_two_pulses(self):
        plan = plan_segments(PulseSchedule(p=2), 1.0)
        assert [d for d, _ in plan] == pytest.approx([0.25, 0.5, 0.25])
        assert [b for _, b in plan] == ["01", "10", "01"]
        assert plan.total_time == pytest.approx(1.0)

    def test_free_evolution(self):
        plan = plan_segments(PulseSchedule(), 3.0)
        assert list(plan) == [(3.0, "01")]

    def test_zero_time(self):
        plan = plan_segments(PulseSchedule(p=3), 0.0)
        assert len(plan) == 4
        assert plan.total_time == 0.0

    @pytest.mark.parametrize("p", [1, 2, 5])
    def test_durations_cover_total_time(self, p):
        plan = plan_segments(PulseSchedule(p=p), 2.7)
        assert len(plan) == p + 1
        assert sum(d for d, _ in plan) == pytest.approx(2.7)

    def test_evolve_composes_segment_exponentials(self, echo_chain):
        propagator = ClusterPropagator(echo_chain, (0, 1, 2))
        schedule = PulseSchedule(p=2)
        vector = propagator.initial
        for duration, branch in plan_segments(schedule, 1.2):
            vector = expm(propagator.generator.branch(branch).toarray(), duration) @ vector
        expected = vectorized_trace(vector, propagator.dim) / propagator.initial_trace
        assert propagator.evolve(schedule, 1.2) == pytest.approx(expected, abs=1e-10)


class TestPropagation:
    @pytest.mark.parametrize("ratio", [0.0, 0.1, 0.5, 1.0, 5.0])
    def test_single_spin_closed_form(self, ratio):
        a = 1.0
        grid = np.linspace(0.0, 10.0, 101)
        curve = propagate_curve(single_spin(a, ratio * a, grid), (0,))
        assert np.allclose(curve, single_spin_analytic(a, ratio * a, grid), atol=1e-9, rtol=0)

    def test_closed_form_is_real_at_critical_damping(self):
        values = single_spin_analytic(2.0, 1.0, np.linspace(0.0, 3.0, 7))
        assert np.allclose(values.imag, 0.0)
        assert values[0] == pytest.approx(1.0)

    def test_coherent_single_spin_oscillates(self):
        grid = np.linspace(0.0, 5.0, 11)
        curve = propagate_curve(single_spin(1.5, 0.0, grid), (0,))
        assert np.allclose(curve, np.cos(0.75 * grid), atol=1e-12)

    def test_echo_refocuses_static_field(self):
        spec = build_chain(3, 0.0, 5.0, 2, initial="random-pure", pulses=PulseSchedule(p=1))
        assert propagate(spec, (0, 1, 2), t=3.7) == pytest.approx(1.0, abs=1e-10)

    def test_curve_matches_independent_runs(self):
        spec = build_chain(2, 1.0, 2.0, 5, gamma=0.2, time_grid=np.linspace(0.0, 2.0, 9))
        propagator = ClusterPropagator(spec, (0, 1))
        curve = propagator.curve(PulseSchedule(), spec.time_grid)
        direct = [propagator.evolve(PulseSchedule(), t) for t in spec.time_grid]
        assert np.allclose(curve, direct, atol=1e-12)

    def test_starts_at_one(self):
        spec = build_chain(3, 1.0, 2.0, 5, gamma=0.2, initial="random-pure")
        assert propagate(spec, (0, 1, 2), PulseSchedule(p=2), 0.0) == pytest.approx(1.0)

    def test_rejects_negative_time(self):
        with pytest.raises(ValueError, match=">= 0"):
            propagate(build_chain(1, 0.0, 1.0, 0), (0,), t=-1.0)

    def test_sparse_path_matches_dense(self, monkeypatch):
        spec = build_chain(
            2,
            1.0,
            2.0,
            5,
            gamma=0.2,
            exchange_rate=0.1,
            pulses=PulseSchedule(p=1),
            time_grid=np.linspace(0.0, 2.0, 5),
        )
        dense = propagate_curve(spec, (0, 1))
        monkeypatch.setattr(lindblad, "DENSE_SUPEROPERATOR_LIMIT", 0)
        exponential = GeneratorExponential(ClusterPropagator(spec, (0, 1)).generator.g01)
        assert not exponential.dense
        sparse = propagate_curve(spec, (0, 1))
        assert np.allclose(sparse, dense, atol=1e-10)

    def test_sparse_uniform_sweep_matches_dense(self, monkeypatch):
        spec = build_chain(
            3,
            1.0,
            2.0,
            5,
            gamma=0.2,
            exchange_rate=0.1,
            initial="random-pure",
            time_grid=np.linspace(0.5, 3.0, 11),
        )
        dense = propagate_curve(spec, (0, 1, 2))
        monkeypatch.setattr(lindblad, "DENSE_SUPEROPERATOR_LIMIT", 0)
        sparse = propagate_curve(spec, (0, 1, 2))
        assert np.allclose(sparse, dense, atol=1e-10)

    @pytest.mark.parametrize("p", [1, 2, 3])
    @pytest.mark.parametrize(
        "grid", [np.linspace(0.0, 1.5, 31), np.linspace(0.3, 1.5, 13)], ids=["origin", "offset"]
    )
    def test_pulsed_uniform_grid_matches_independent_runs(self, echo_chain, p, grid):
        propagator = ClusterPropagator(echo_chain, (0, 1, 2))
        schedule = PulseSchedule(p=p)
        curve = propagator.curve(schedule, grid)
        direct = [propagator.evolve(schedule, t) for t in grid]
        assert np.allclose(curve, direct, atol=1e-10)

    @pytest.mark.parametrize("p", [0, 2])
    def test_non_uniform_grid(self, p):
        spec = build_chain(2, 1.0, 2.0, 5, gamma=0.2)
        grid = np.array([0.0, 0.1, 0.4, 1.3, 2.0])
        propagator = ClusterPropagator(spec, (0, 1))
        schedule = PulseSchedule(p=p)
        curve = propagator.curve(schedule, grid)
        direct = [propagator.evolve(schedule, t) for t in grid]
        assert np.allclose(curve, direct, atol=1e-12)

    def test_empty_grid(self):
        propagator = ClusterPropagator(build_chain(2, 1.0, 2.0, 5), (0, 1))
        assert propagator.curve(PulseSchedule(p=1), []).shape == (0,)

    def test_dense_propagator_cache_is_bounded(self):
        spec = single_spin(1.0, 0.2, np.linspace(0.0, 1.0, 3))
        exponential = GeneratorExponential(ClusterPropagator(spec, (0,)).generator.g01, 4)
        vector = np.array([0.5, 0.0, 0.0, 0.5], dtype=complex)
        for duration in np.linspace(0.1, 2.0, 10):
            exponential.apply(vector, duration)
        assert exponential.propagator.cache_info().currsize == 4

    def test_pulsed_curve_keeps_cache_bounded(self, echo_chain):
        propagator = ClusterPropagator(echo_chain, (0, 1, 2))
        grid = np.linspace(0.0, 2.0, 81) ** 1.5
        propagator.curve(PulseSchedule(p=1), grid)
        for branch in ("01", "10"):
            info = propagator._exponentials[branch].propagator.cache_info()
            assert info.currsize <= PROPAGATOR_CACHE_SIZE

    def test_overdamped_closed_form_at_long_times(self):
        grid = np.linspace(0.0, 200.0, 401)
        spec = single_spin(1.0, 5.0, grid)
        values = single_spin_analytic(1.0, 5.0, grid)
        assert np.all(np.isfinite(values))
        assert np.allclose(propagate_curve(spec, (0,)), values, atol=1e-9, rtol=0)
        late = single_spin_analytic(1.0, 5.0, 200.0)
        assert late == pytest.approx(propagate(spec, (0,), t=200.0), abs=1e-9)

    @pytest.mark.parametrize("p", [0, 1, 2])
    def test_coherence_magnitude_is_bounded(self, echo_chain, p):
        grid = np.linspace(0.0, 5.0, 26)
        values = propagate_curve(echo_chain, (0, 1, 2), PulseSchedule(p=p), grid)
        assert np.max(np.abs(values)) <= 1.0 + 1e-8
