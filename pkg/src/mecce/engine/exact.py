"""
Brute-force reference solutions on the full bath.

``exact_coherence`` treats the whole bath as one cluster and runs the projected
propagator without any expansion. ``exact_unprojected`` integrates the ordinary
GKSL equation for the joint density matrix of central spin and bath, which gives
trace and positivity checks plus an independent route to the coherence.
"""

import logging
import time
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from mecce.config.settings import EXACT_MAX_SPINS, UNPROJECTED_MAX_SPINS
from mecce.engine.cce import CoherenceCurve
from mecce.engine.lindblad import (
    ClusterPropagator,
    GeneratorExponential,
    initial_block,
    plan_segments,
    project_hamiltonians,
    vectorized_trace,
)
from mecce.model.system import PulseSchedule, SystemSpec, jump_factors
from mecce.utils.operator_algebra import PAULI, embed_operators, lindblad_superoperator

logger = logging.getLogger(__name__)


def exact_coherence(
    spec: SystemSpec,
    schedule: PulseSchedule | None = None,
    time_grid: Sequence[float] | None = None,
) -> CoherenceCurve:
    """
    Coherence from the projected master equation on the entire bath.

    Raises:
        ValueError: If the bath exceeds EXACT_MAX_SPINS
    """
    n = spec.n_spins
    if n > EXACT_MAX_SPINS:
        raise ValueError(f"exact oracle is capped at {EXACT_MAX_SPINS} spins, bath has {n}")
    schedule = schedule or spec.pulses
    grid = np.asarray(spec.time_grid if time_grid is None else time_grid, dtype=float)

    start = time.perf_counter()
    if n == 0:
        values = np.ones(grid.shape, dtype=complex)
    else:
        values = ClusterPropagator(spec, range(n)).curve(schedule, grid)
    wall_time = time.perf_counter() - start
    logger.info(f"Exact projected solution for {n} spins in {wall_time:.2f}s")
    return CoherenceCurve(
        grid,
        values,
        {
            "method": "exact",
            "order": n,
            "seed": spec.metadata.get("seed"),
            "model": spec.metadata.get("model"),
            "wall_time": wall_time,
        },
    )


@dataclass
class UnprojectedReport:
    """Trace, smallest eigenvalue and extracted coherence of the joint density matrix."""

    time: np.ndarray
    traces: np.ndarray
    min_eigenvalues: np.ndarray
    curve: CoherenceCurve

    @property
    def max_trace_error(self) -> float:
        return float(np.max(np.abs(self.traces - 1.0)))

    @property
    def min_eigenvalue(self) -> float:
        return float(np.min(self.min_eigenvalues))


def full_liouvillian(spec: SystemSpec) -> sp.csr_matrix:
    """
    GKSL generator of central spin plus bath.

    H = (sigma_z / 2) (x) B + 1 (x) H_bath with B = sum_i a_i Iz^i; the central
    spin is the leftmost tensor factor and jumps act on the bath only.
    """
    n = spec.n_spins
    indices = tuple(range(n))
    branches = project_hamiltonians(spec, indices)
    field = branches.h0 - branches.h1
    bath = 0.5 * (branches.h0 + branches.h1)
    hamiltonian = sp.kron(0.5 * PAULI["z"], field, format="csr") + sp.kron(
        PAULI["i"], bath, format="csr"
    )

    local = {index: index for index in indices}
    jumps = []
    for jump in spec.jumps:
        if jump.rate == 0:
            continue
        factors = {site + 1: op for site, op in jump_factors(jump, local).items()}
        jumps.append((jump.rate, embed_operators(factors, n + 1)))
    return lindblad_superoperator(hamiltonian, hamiltonian, jumps)


def exact_unprojected(
    spec: SystemSpec,
    time_grid: Sequence[float] | None = None,
    schedule: PulseSchedule | None = None,
) -> UnprojectedReport:
    """
    Evolve the joint density matrix under the full master equation.

    The central spin starts in (|0> + |1>)/sqrt(2) and the bath in its product
    state. Pi-pulses apply sigma_x to the central spin. The coherence is read
    from the <0|rho|1> block after an even number of pulses and from <1|rho|0>
    after an odd number, normalized by its value at t = 0.

    Raises:
        ValueError: If the bath exceeds UNPROJECTED_MAX_SPINS
    """
    n = spec.n_spins
    if n > UNPROJECTED_MAX_SPINS:
        raise ValueError(
            f"unprojected oracle is capped at {UNPROJECTED_MAX_SPINS} bath spins, bath has {n}"
        )
    if n == 0:
        raise ValueError("unprojected oracle needs at least one bath spin")
    schedule = schedule or spec.pulses
    grid = np.asarray(spec.time_grid if time_grid is None else time_grid, dtype=float)

    d = 2**n
    full_dim = 2 * d
    superposition = 0.5 * np.ones((2, 2), dtype=complex)
    rho_bath = initial_block(spec, range(n))
    rho0 = np.kron(superposition, rho_bath)
    block_trace0 = np.trace(rho0[:d, d:])

    flip = np.kron(PAULI["x"], np.eye(d, dtype=complex))
    pulse = sp.csr_matrix(np.kron(flip.T, flip))
    exponential = GeneratorExponential(full_liouvillian(spec))

    def evolve(total_time: float) -> tuple[np.ndarray, int]:
        vector = rho0.reshape(-1, order="F")
        plan = plan_segments(schedule, total_time)
        for k, (duration, _) in enumerate(plan):
            if k > 0:
                vector = pulse @ vector
            vector = exponential.apply(vector, duration)
        return vector, len(plan) - 1

    traces = np.empty(grid.shape)
    min_eigenvalues = np.empty(grid.shape)
    values = np.empty(grid.shape, dtype=complex)

    start = time.perf_counter()
    vector = rho0.reshape(-1, order="F")
    previous = 0.0
    for k, t in enumerate(grid):
        if schedule.p == 0:
            vector = exponential.apply(vector, t - previous)
            previous = t
            pulses_applied = 0
        else:
            vector, pulses_applied = evolve(t)
        rho = vector.reshape((full_dim, full_dim), order="F")
        traces[k] = vectorized_trace(vector, full_dim).real
        min_eigenvalues[k] = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
        block = rho[:d, d:] if pulses_applied % 2 == 0 else rho[d:, :d]
        values[k] = np.trace(block) / block_trace0

    wall_time = time.perf_counter() - start
    logger.info(f"Exact unprojected solution for {n} + 1 spins in {wall_time:.2f}s")
    curve = CoherenceCurve(
        grid,
        values,
        {
            "method": "exact-unprojected",
            "order": n,
            "seed": spec.metadata.get("seed"),
            "model": spec.metadata.get("model"),
            "wall_time": wall_time,
        },
    )
    return UnprojectedReport(grid, traces, min_eigenvalues, curve)
