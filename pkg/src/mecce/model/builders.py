"""
Model generators for central spin baths.

This module builds SystemSpec instances for the three bath geometries studied
with the master-equation expansion: a random nearest-neighbor chain, a square
lattice with uniform coupling, and electronic spins on the (100) surface above
a shallow NV center. Generators are referentially transparent in their
parameters and seed.
"""

import logging
import math
import warnings

import numpy as np
import scipy.constants as const

from mecce.model.system import (
    BathSpin,
    BathState,
    CouplingGraph,
    JumpSpec,
    PulseSchedule,
    SystemSpec,
    exchange_jumps,
    relaxation_jumps,
)

logger = logging.getLogger(__name__)

# NV symmetry axis for a (100)-oriented surface with normal along z
NV_AXIS = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)

# Electron-electron dipolar constant mu0/(4pi) * gamma_e**2 * hbar in rad * nm^3 / us
ELECTRON_DIPOLAR_CONSTANT = (
    const.mu_0
    / (4.0 * math.pi)
    * const.physical_constants["electron gyromag. ratio"][0] ** 2
    * const.hbar
    * 1e27  # m^3 -> nm^3
    * 1e-6  # 1/s -> 1/us
)

DEFAULT_CHAIN_GRID = np.linspace(0.0, 40.0, 81)
DEFAULT_LATTICE_GRID = np.linspace(0.0, 2.0, 81)
DEFAULT_NV_GRID = np.linspace(0.0, 400.0, 81)


def initial_state(kind: str, n: int, seed: int | None) -> BathState:
    """Product bath state of a named kind."""
    if kind == "neel":
        return BathState.neel(n)
    if kind == "maximally-mixed":
        return BathState.maximally_mixed(n)
    if kind == "random-pure":
        return BathState.random_product(n, seed, pure=True)
    if kind == "random-basis":
        return BathState.random_product(n, seed, pure=False)
    raise ValueError(f"unknown initial state '{kind}'")


def secular_dipolar_coupling(
    separation: np.ndarray, field_axis: np.ndarray, constant: float = ELECTRON_DIPOLAR_CONSTANT
) -> np.ndarray:
    """
    Secular point-dipole coupling D (1 - 3 cos^2 theta) / r^3.

    Args:
        separation: Inter-spin vectors with shape (..., 3), nm
        field_axis: Unit vector of the quantization axis
        constant: Dipolar prefactor in rad * nm^3 / time

    Returns:
        Couplings with shape separation.shape[:-1]
    """
    separation = np.asarray(separation, dtype=float)
    distance = np.linalg.norm(separation, axis=-1)
    if np.any(distance == 0):
        raise ValueError("dipolar coupling undefined for coincident spins")
    cos_theta = separation @ field_axis / distance
    return constant * (1.0 - 3.0 * cos_theta**2) / distance**3


def build_chain(
    n: int,
    j_max: float,
    a_max: float,
    seed: int | None,
    *,
    gamma: float = 0.0,
    exchange_rate: float = 0.0,
    periodic: bool = False,
    initial: str = "neel",
    pulses: PulseSchedule | None = None,
    time_grid: np.ndarray | None = None,
) -> SystemSpec:
    """
    Nearest-neighbor chain with J_ij ~ U[0, j_max] and a_i ~ U[0, a_max].

    Args:
        n: Number of bath spins (>= 1)
        j_max: Upper bound of intrabath couplings (rad/time)
        a_max: Upper bound of central-spin couplings (rad/time)
        seed: Seed of the numpy generator
        gamma: Common raise/lower rate per spin
        exchange_rate: Rate of two-site incoherent exchange on each bond
        periodic: Close the chain into a ring (n >= 3)
        initial: Initial bath state kind (neel, maximally-mixed, random-pure, random-basis)
        pulses: Pi-pulse schedule (free evolution by default)
        time_grid: Evaluation times

    Returns:
        SystemSpec of the chain
    """
    if n < 1:
        raise ValueError(f"chain needs at least one spin, got n={n}")
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, a_max, size=n)
    bonds = [(i, i + 1) for i in range(n - 1)]
    if periodic and n >= 3:
        bonds.append((0, n - 1))
    couplings = rng.uniform(0.0, j_max, size=len(bonds))

    jumps: tuple[JumpSpec, ...] = relaxation_jumps(n, gamma)
    if exchange_rate > 0:
        jumps += exchange_jumps(bonds, exchange_rate)

    edges = tuple((i, j, float(c)) for (i, j), c in zip(bonds, couplings, strict=True))
    return SystemSpec(
        bath=tuple(BathSpin(i, float(a[i])) for i in range(n)),
        graph=CouplingGraph(edges),
        jumps=jumps,
        initial=initial_state(initial, n, seed),
        pulses=pulses or PulseSchedule(),
        time_grid=DEFAULT_CHAIN_GRID if time_grid is None else time_grid,
        metadata={"model": "chain", "seed": seed, "n": n, "gamma": gamma},
    )


def build_lattice2d(
    side: int,
    j: float,
    a_max: float,
    seed: int | None,
    *,
    gamma: float = 0.0,
    periodic: bool = False,
    initial: str = "random-pure",
    pulses: PulseSchedule | None = None,
    time_grid: np.ndarray | None = None,
) -> SystemSpec:
    """
    Square lattice of side x side spins with uniform nearest-neighbor coupling.

    Spin (row, col) has index row * side + col. Open boundaries give
    2 * side * (side - 1) edges; ``periodic`` wraps both directions.
    """
    if side < 1:
        raise ValueError(f"lattice side must be >= 1, got {side}")
    n = side * side
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, a_max, size=n)

    bonds = set()
    for row in range(side):
        for col in range(side):
            site = row * side + col
            if col + 1 < side:
                bonds.add((site, site + 1))
            elif periodic and side > 2:
                bonds.add((row * side, site))
            if row + 1 < side:
                bonds.add((site, site + side))
            elif periodic and side > 2:
                bonds.add((col, site))
    edges = tuple((i, k, float(j)) for i, k in sorted(bonds))

    # Initial state draws from its own stream so couplings are independent of the state kind
    state_seed = None if seed is None else seed + 1
    return SystemSpec(
        bath=tuple(BathSpin(i, float(a[i])) for i in range(n)),
        graph=CouplingGraph(edges),
        jumps=relaxation_jumps(n, gamma),
        initial=initial_state(initial, n, state_seed),
        pulses=pulses or PulseSchedule(p=1),
        time_grid=DEFAULT_LATTICE_GRID if time_grid is None else time_grid,
        metadata={"model": "lattice2d", "seed": seed, "side": side, "gamma": gamma},
    )


def build_nv_surface(
    depth: float,
    density: float,
    t1: float,
    extent: float,
    seed: int | None,
    *,
    field_axis: np.ndarray | None = None,
    dipolar_constant: float = ELECTRON_DIPOLAR_CONSTANT,
    pulses: PulseSchedule | None = None,
    time_grid: np.ndarray | None = None,
) -> SystemSpec:
    """
    Electronic surface spins above a shallow NV center.

    Spins follow a seeded uniform Poisson point process on a square patch of
    the (100) surface (z = 0) with side ``extent``; the NV sits ``depth`` below
    the patch center. Lengths are in nm and times in microseconds.

    The NV coupling is a_i = D (1 - 3 cos^2 theta_i) / r_i^3. Surface pairs use
    J_ij = -D (1 - 3 cos^2 theta_ij) / (2 r_ij^3), which turns the XXZ form
    (J/2)(I+I- + I-I+ - 4 IzIz) into the secular dipolar interaction. Each spin
    relaxes through raise and lower channels at gamma = 1 / (2 T1) starting from
    the maximally mixed state.

    Args:
        depth: NV depth below the surface (nm, >= 0)
        density: Areal spin density (spins / nm^2, > 0)
        t1: Population relaxation time of the surface spins (us, > 0)
        extent: Side of the surface patch (nm)
        seed: Seed of the positional point process
        field_axis: Quantization axis, NV axis by default
        dipolar_constant: Dipolar prefactor in rad * nm^3 / us

    Returns:
        SystemSpec of the surface bath; empty (with a warning) if no spin lands on the patch
    """
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    if density <= 0:
        raise ValueError(f"density must be > 0, got {density}")
    if t1 <= 0:
        raise ValueError(f"t1 must be > 0, got {t1}")
    if extent <= 0:
        raise ValueError(f"extent must be > 0, got {extent}")

    axis = NV_AXIS if field_axis is None else np.asarray(field_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)

    rng = np.random.default_rng(seed)
    n = int(rng.poisson(density * extent**2))
    xy = rng.uniform(-extent / 2.0, extent / 2.0, size=(n, 2))
    positions = np.column_stack([xy, np.zeros(n)])
    nv_position = np.array([0.0, 0.0, -depth])

    if n == 0:
        message = (
            f"NV surface patch of {extent} nm at density {density} nm^-2 holds no spins; "
            "the bath is empty"
        )
        warnings.warn(message, stacklevel=2)
        logger.warning(message)

    a = secular_dipolar_coupling(positions - nv_position, axis, dipolar_constant) if n else []
    edges = []
    for i in range(n):
        for k in range(i + 1, n):
            coupling = secular_dipolar_coupling(positions[k] - positions[i], axis, dipolar_constant)
            edges.append((i, k, float(-0.5 * coupling)))

    gamma = 1.0 / (2.0 * t1)
    logger.info(f"NV surface model: {n} spins, depth {depth} nm, gamma {gamma:.3g} 1/us")
    return SystemSpec(
        bath=tuple(
            BathSpin(i, float(a[i]), tuple(float(x) for x in positions[i])) for i in range(n)
        ),
        graph=CouplingGraph(tuple(edges)),
        jumps=relaxation_jumps(n, gamma),
        initial=BathState.maximally_mixed(n),
        pulses=pulses or PulseSchedule(p=1),
        time_grid=DEFAULT_NV_GRID if time_grid is None else time_grid,
        metadata={
            "model": "nv-surface",
            "seed": seed,
            "depth": depth,
            "density": density,
            "t1": t1,
            "gamma": gamma,
        },
    )


def build_disjoint_pairs(
    n_pairs: int,
    j: float,
    a_max: float,
    seed: int | None,
    *,
    gamma: float = 0.0,
    initial: str = "maximally-mixed",
    pulses: PulseSchedule | None = None,
    time_grid: np.ndarray | None = None,
) -> SystemSpec:
    """Bath of independent coupled pairs (2k, 2k+1), each bound by coupling ``j``."""
    if n_pairs < 1:
        raise ValueError(f"need at least one pair, got {n_pairs}")
    n = 2 * n_pairs
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, a_max, size=n)
    return SystemSpec(
        bath=tuple(BathSpin(i, float(a[i])) for i in range(n)),
        graph=CouplingGraph(tuple((2 * k, 2 * k + 1, float(j)) for k in range(n_pairs))),
        jumps=relaxation_jumps(n, gamma),
        initial=initial_state(initial, n, seed),
        pulses=pulses or PulseSchedule(),
        time_grid=DEFAULT_CHAIN_GRID if time_grid is None else time_grid,
        metadata={"model": "disjoint-pairs", "seed": seed, "n_pairs": n_pairs, "gamma": gamma},
    )
