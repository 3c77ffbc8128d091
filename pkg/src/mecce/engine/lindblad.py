"""
Projected master equation for the central spin coherence of a bath cluster.

The off-diagonal block rho01 = <0|rho|1> of the joint density matrix obeys

    d rho01/dt = -i H0 rho01 + i rho01 H1 + sum_k g_k D[L_k](rho01)

with branch Hamiltonians H0, H1 that differ in the sign of the secular coupling
to the central spin. This module builds those branches for any cluster of bath
spins, assembles the vectorized generator, and propagates rho01 through a pi-pulse
schedule. Pulses swap the roles of H0 and H1; the jump operators act on the bath
only and are not affected by pulses.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Literal

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from mecce.config.settings import DENSE_SUPEROPERATOR_LIMIT, PROPAGATOR_CACHE_SIZE
from mecce.model.system import JumpSpec, PulseSchedule, SystemSpec, jump_factors, pulse_times
from mecce.utils.operator_algebra import (
    embed_operators,
    expm,
    frobenius_norm,
    is_hermitian,
    kron,
    lindblad_superoperator,
    spin_operator,
)

if TYPE_CHECKING:
    from mecce.engine.cce import Cluster

logger = logging.getLogger(__name__)

Branch = Literal["01", "10"]

# Below this |x| the ratio sinh(x)/x is replaced by its Taylor series
SINHC_TAYLOR_THRESHOLD = 1e-6


class IllPosedStateError(ValueError):
    """Raised when Tr[rho01(0)] vanishes and the coherence cannot be normalized."""


def cluster_indices(cluster: Cluster | Iterable[int]) -> tuple[int, ...]:
    """Sorted bath indices of a Cluster or of a plain index collection."""
    indices = getattr(cluster, "indices", cluster)
    return tuple(sorted(int(i) for i in indices))


@dataclass(frozen=True, eq=False)
class BranchHamiltonians:
    """Branch Hamiltonians H0 (central spin in |0>) and H1 (central spin in |1>)."""

    h0: sp.csr_matrix
    h1: sp.csr_matrix
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        if self.h0.shape != self.h1.shape:
            raise ValueError(f"branch dimensions differ: {self.h0.shape} vs {self.h1.shape}")
        for name, h in (("H0", self.h0), ("H1", self.h1)):
            if not is_hermitian(h, atol=1e-12):
                raise ValueError(f"{name} is not Hermitian")

    @property
    def dim(self) -> int:
        return self.h0.shape[0]

    def frobenius(self) -> float:
        """max(||H0||_F, ||H1||_F)."""
        return max(frobenius_norm(self.h0), frobenius_norm(self.h1))


def project_hamiltonians(spec: SystemSpec, cluster: Cluster | Iterable[int]) -> BranchHamiltonians:
    """
    Branch Hamiltonians of a cluster under the secular XXZ interaction.

    H^(0,1) = +-(1/2) sum_i a_i Iz^i + sum_<ij> (J_ij / 2)(I+^i I-^j + I-^i I+^j - 4 Iz^i Iz^j),
    where only edges with both endpoints in the cluster contribute. Operators
    are embedded in cluster index order.

    Args:
        spec: System description
        cluster: Cluster or collection of bath indices

    Returns:
        BranchHamiltonians on the 2**k dimensional cluster space

    Raises:
        ValueError: If the cluster is empty or references spins outside the bath
    """
    indices = cluster_indices(cluster)
    if not indices:
        raise ValueError("cannot project Hamiltonians onto an empty cluster")
    if len(set(indices)) != len(indices):
        raise ValueError(f"cluster has repeated indices: {indices}")
    if indices[0] < 0 or indices[-1] >= spec.n_spins:
        raise ValueError(f"cluster {indices} outside bath of {spec.n_spins} spins")

    k = len(indices)
    local = {index: site for site, index in enumerate(indices)}
    dim = 2**k

    field = sp.csr_matrix((dim, dim), dtype=complex)
    for index in indices:
        field = field + spec.bath[index].a * spin_operator("z", local[index], k)

    bath = sp.csr_matrix((dim, dim), dtype=complex)
    for i, j, coupling in spec.graph.within(indices):
        si, sj = local[i], local[j]
        flip_flop = spin_operator("+", si, k) @ spin_operator("-", sj, k)
        flip_flop = flip_flop + spin_operator("-", si, k) @ spin_operator("+", sj, k)
        ising = spin_operator("z", si, k) @ spin_operator("z", sj, k)
        bath = bath + 0.5 * coupling * (flip_flop - 4.0 * ising)

    return BranchHamiltonians(
        h0=(bath + 0.5 * field).tocsr(),
        h1=(bath - 0.5 * field).tocsr(),
        indices=indices,
    )


def jumps_for_cluster(
    jumps: Iterable[JumpSpec], cluster: Cluster | Iterable[int]
) -> list[JumpSpec]:
    """Jumps whose targets all lie inside the cluster, in input order."""
    members = set(cluster_indices(cluster))
    return [jump for jump in jumps if set(jump.targets) <= members]


@dataclass(frozen=True, eq=False)
class ProjectedGenerator:
    """
    Vectorized generators of the tracked coherence block.

    ``g01`` drives rho01 (H0 from the left, H1 from the right); ``g10`` is the
    partner with the branch roles swapped, active after an odd number of pulses.
    """

    g01: sp.csr_matrix
    g10: sp.csr_matrix
    dim: int

    def branch(self, order: Branch) -> sp.csr_matrix:
        if order == "01":
            return self.g01
        if order == "10":
            return self.g10
        raise ValueError(f"unknown branch order '{order}'")


def build_generator(
    h: BranchHamiltonians,
    jumps: Sequence[JumpSpec],
    cluster: Cluster | Iterable[int] | None = None,
) -> ProjectedGenerator:
    """
    Assemble the two-branch projected Lindblad generator of a cluster.

    A jump contributes only if all of its targets lie in the cluster; others are
    skipped silently. Zero-rate jumps are dropped.

    Args:
        h: Branch Hamiltonians of the cluster
        jumps: Candidate jumps in bath indices
        cluster: Cluster the Hamiltonians were projected on (defaults to ``h.indices``)

    Returns:
        ProjectedGenerator with superoperators of dimension 4**k
    """
    indices = cluster_indices(cluster) if cluster is not None else h.indices
    if 2 ** len(indices) != h.dim:
        raise ValueError(
            f"cluster {indices} does not match Hamiltonian dimension {h.dim}"
        )
    local = {index: site for site, index in enumerate(indices)}
    operators = [
        (jump.rate, embed_operators(jump_factors(jump, local), len(indices)))
        for jump in jumps_for_cluster(jumps, indices)
        if jump.rate > 0
    ]
    return ProjectedGenerator(
        g01=lindblad_superoperator(h.h0, h.h1, operators),
        g10=lindblad_superoperator(h.h1, h.h0, operators),
        dim=h.dim,
    )


def dissipation_frobenius(jumps: Sequence[JumpSpec], cluster: Cluster | Iterable[int]) -> float:
    """max_k g_k ||L_k^dag L_k||_F over the jumps active in a cluster (0 without jumps)."""
    indices = cluster_indices(cluster)
    local = {index: site for site, index in enumerate(indices)}
    largest = 0.0
    for jump in jumps_for_cluster(jumps, indices):
        if jump.rate == 0:
            continue
        operator = embed_operators(jump_factors(jump, local), len(indices))
        largest = max(largest, jump.rate * frobenius_norm(operator.conj().T @ operator))
    return largest


@dataclass(frozen=True)
class SegmentPlan:
    """Free-evolution segments between pulses, each tagged with its branch order."""

    segments: tuple[tuple[float, Branch], ...]

    @property
    def total_time(self) -> float:
        return float(sum(duration for duration, _ in self.segments))

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)


def plan_segments(schedule: PulseSchedule, total_time: float) -> SegmentPlan:
    """
    Split [0, total_time] at the pulse instants.

    The first segment runs in branch order 01 and every pulse flips the order,
    so p pulses give p + 1 segments.
    """
    if not np.isfinite(total_time) or total_time < 0:
        raise ValueError(f"total time must be finite and >= 0, got {total_time}")
    edges = [0.0, *pulse_times(schedule, total_time), float(total_time)]
    segments = []
    for k in range(len(edges) - 1):
        duration = max(edges[k + 1] - edges[k], 0.0)
        segments.append((duration, "01" if k % 2 == 0 else "10"))
    return SegmentPlan(tuple(segments))


def uniform_step(grid: np.ndarray) -> float | None:
    """Spacing of an evenly spaced ascending grid with at least two points, else None."""
    if grid.size < 2:
        return None
    step = float(grid[-1] - grid[0]) / (grid.size - 1)
    if step <= 0 or not np.allclose(np.diff(grid), step, rtol=1e-9, atol=0.0):
        return None
    return step


def vectorized_trace(vector: np.ndarray, dim: int) -> complex:
    """Trace of a column-stacked dim x dim matrix (diagonal at stride dim + 1)."""
    return complex(vector[:: dim + 1].sum())


def initial_block(spec: SystemSpec, cluster: Cluster | Iterable[int]) -> np.ndarray:
    """Cluster-restricted product bath state as the initial rho01 block."""
    indices = cluster_indices(cluster)
    block = np.ones((1, 1), dtype=complex)
    for matrix in spec.initial.restricted(indices):
        block = kron(block, matrix)
    return block


class GeneratorExponential:
    """
    Action of exp(G t) on vectors for one sparse generator G.

    Generators up to DENSE_SUPEROPERATOR_LIMIT are exponentiated densely and
    kept in an LRU cache of PROPAGATOR_CACHE_SIZE durations; larger ones are
    applied with ``expm_multiply``.
    """

    def __init__(self, generator: sp.csr_matrix, cache_size: int = PROPAGATOR_CACHE_SIZE):
        self.generator = generator
        self.dense = generator.shape[0] <= DENSE_SUPEROPERATOR_LIMIT
        self._matrix: np.ndarray | None = None
        self.propagator = lru_cache(maxsize=cache_size)(self._exponentiate)

    def matrix(self) -> np.ndarray:
        """Dense generator, built on first use."""
        if self._matrix is None:
            self._matrix = self.generator.toarray()
        return self._matrix

    def _exponentiate(self, duration: float) -> np.ndarray:
        return expm(self.matrix(), float(duration))

    def apply(self, vector: np.ndarray, duration: float) -> np.ndarray:
        if duration == 0:
            return vector
        if self.dense:
            return self.propagator(float(duration)) @ vector
        return expm_multiply(self.generator * duration, vector)

    def apply_grid(self, vector: np.ndarray, grid: np.ndarray) -> np.ndarray:
        """exp(G t) vector for every t of a uniform grid, one row per time point."""
        return expm_multiply(
            self.generator, vector, start=grid[0], stop=grid[-1], num=grid.size, endpoint=True
        )


class ClusterPropagator:
    """
    Propagates the vectorized coherence block of one cluster.

    Instances hold per-duration exponential caches and are not shared between
    workers.
    """

    def __init__(self, spec: SystemSpec, cluster: Cluster | Iterable[int]):
        self.indices = cluster_indices(cluster)
        self.hamiltonians = project_hamiltonians(spec, self.indices)
        self.generator = build_generator(self.hamiltonians, spec.jumps, self.indices)

        rho0 = initial_block(spec, self.indices)
        self.dim = rho0.shape[0]
        self.initial = rho0.reshape(-1, order="F")
        self.initial_trace = self._trace(self.initial)
        if abs(self.initial_trace) < 1e-14:
            raise IllPosedStateError(
                f"ill-posed initial state: Tr[rho01(0)] = 0 on cluster {self.indices}"
            )

        self._exponentials = {
            "01": GeneratorExponential(self.generator.g01),
            "10": GeneratorExponential(self.generator.g10),
        }

    def _trace(self, vector: np.ndarray) -> complex:
        return vectorized_trace(vector, self.dim)

    def step(self, vector: np.ndarray, duration: float, branch: Branch) -> np.ndarray:
        """Evolve a vectorized block for ``duration`` under one branch order."""
        return self._exponentials[branch].apply(vector, duration)

    def evolve(self, schedule: PulseSchedule, total_time: float) -> complex:
        """Coherence Tr[rho01(T)] / Tr[rho01(0)] after the schedule over ``total_time``."""
        vector = self.initial
        for duration, branch in plan_segments(schedule, total_time):
            vector = self.step(vector, duration, branch)
        return self._trace(vector) / self.initial_trace

    def curve(self, schedule: PulseSchedule, time_grid: Sequence[float]) -> np.ndarray:
        """
        Coherence on a time grid.

        Free evolution is stepped sequentially between grid points, or swept
        in one ``expm_multiply`` call for large generators on a uniform grid.
        With pulses every grid point is an independent experiment, since pulse
        instants scale with the total time; on a uniform grid the dense segment
        propagators are advanced by one step per point instead of recomputed.
        """
        grid = np.asarray(time_grid, dtype=float)
        if grid.size == 0:
            return np.empty(0, dtype=complex)
        step = uniform_step(grid)
        if schedule.p == 0:
            return self._free_curve(grid, step)
        if step is not None and all(e.dense for e in self._exponentials.values()):
            return self._pulsed_curve(schedule, grid, step)
        return np.array([self.evolve(schedule, t) for t in grid], dtype=complex)

    def _free_curve(self, grid: np.ndarray, step: float | None) -> np.ndarray:
        exponential = self._exponentials["01"]
        if step is not None and not exponential.dense:
            states = exponential.apply_grid(self.initial, grid)
            return np.array([self._trace(v) for v in states]) / self.initial_trace
        values = np.empty(grid.shape, dtype=complex)
        vector = self.step(self.initial, grid[0], "01")
        values[0] = self._trace(vector) / self.initial_trace
        for k in range(1, grid.size):
            duration = step if step is not None else grid[k] - grid[k - 1]
            vector = self.step(vector, duration, "01")
            values[k] = self._trace(vector) / self.initial_trace
        return values

    def _pulsed_curve(self, schedule: PulseSchedule, grid: np.ndarray, step: float) -> np.ndarray:
        # Segment k of the schedule over total time T lasts fraction_k * T
        fractions: dict[tuple[float, Branch], float] = {}
        segments = []
        for fraction, branch in plan_segments(schedule, 1.0):
            key = (round(fraction, 12), branch)
            fractions.setdefault(key, fraction)
            segments.append(key)
        current = {}
        advance = {}
        for key, fraction in fractions.items():
            matrix = self._exponentials[key[1]].matrix()
            current[key] = expm(matrix, fraction * grid[0])
            advance[key] = expm(matrix, fraction * step)

        values = np.empty(grid.shape, dtype=complex)
        for k in range(grid.size):
            if k:
                for key in current:
                    current[key] = advance[key] @ current[key]
            vector = self.initial
            for key in segments:
                vector = current[key] @ vector
            values[k] = self._trace(vector) / self.initial_trace
        return values


def propagate(
    spec: SystemSpec,
    cluster: Cluster | Iterable[int],
    schedule: PulseSchedule | None = None,
    t: float = 0.0,
) -> complex:
    """
    Coherence of the central spin coupled to a single cluster at time ``t``.

    Raises:
        IllPosedStateError: If the restricted initial state has zero trace
    """
    if t < 0:
        raise ValueError(f"duration must be >= 0, got {t}")
    propagator = ClusterPropagator(spec, cluster)
    return propagator.evolve(schedule or spec.pulses, t)


def propagate_curve(
    spec: SystemSpec,
    cluster: Cluster | Iterable[int],
    schedule: PulseSchedule | None = None,
    time_grid: Sequence[float] | None = None,
) -> np.ndarray:
    """Coherence of a single cluster over a time grid (``spec.time_grid`` by default)."""
    propagator = ClusterPropagator(spec, cluster)
    grid = spec.time_grid if time_grid is None else time_grid
    return propagator.curve(schedule or spec.pulses, grid)


def _sinhc(x: np.ndarray) -> np.ndarray:
    small = np.abs(x) < SINHC_TAYLOR_THRESHOLD
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x**2 / 6.0, np.sinh(safe) / safe)


def single_spin_analytic(a: float, gamma: float, t):
    """
    Closed-form coherence of a central spin coupled to one relaxing bath spin.

    L(t) = exp(-g t) [cosh(w t / 2) + (2 g / w) sinh(w t / 2)], w = sqrt(4 g^2 - a^2),
    for a maximally mixed bath spin with raise and lower channels at rate g.
    The square root is complex so the under- and overdamped regimes share one
    formula; the degenerate point w = 0 goes through a Taylor branch.

    Args:
        a: Coupling to the central spin (rad/time)
        gamma: Rate of each relaxation channel (>= 0)
        t: Time or array of times

    Returns:
        Complex coherence with the shape of ``t`` (scalar for scalar input)
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    times = np.asarray(t, dtype=float)
    omega = np.sqrt(complex(4.0 * gamma**2 - a**2))
    x = 0.5 * omega * times
    # Overdamped tails are summed as two decaying exponentials so cosh never overflows
    growing = np.real(x) > 1.0
    bounded = np.where(growing, 0.0, x)
    value = np.exp(-gamma * times) * (np.cosh(bounded) + gamma * times * _sinhc(bounded))
    if np.any(growing):
        half = 0.5 * omega.real
        ratio = gamma / half
        slow = 0.5 * (1.0 + ratio) * np.exp((half - gamma) * times)
        fast = 0.5 * (1.0 - ratio) * np.exp(-(half + gamma) * times)
        tail = slow + fast
        value = np.where(growing, tail, value)
    # The expression is real for every parameter choice
    value = np.real(value).astype(complex)
    if value.ndim == 0:
        return complex(value)
    return value
