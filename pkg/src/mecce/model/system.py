"""
Physical system description for central spin decoherence simulations.

This module defines the immutable domain types shared by every engine: bath
spins and their couplings to the central spin, the intrabath coupling graph,
dissipative jump channels, pi-pulse schedules, initial bath states, and the
assembled SystemSpec. All couplings and rates are angular frequencies.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    from enum import StrEnum
else:  # pragma: no cover - backport of enum.StrEnum for Python 3.10
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__

        @staticmethod
        def _generate_next_value_(name, start, count, last_values):
            return name.lower()
from typing import Any, Literal

import numpy as np

from mecce.utils.operator_algebra import SPIN_HALF_OPERATORS

PulseTiming = Literal["cpmg", "equidistant"]

SPIN_UP = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
SPIN_DOWN = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)
MAXIMALLY_MIXED = 0.5 * np.eye(2, dtype=complex)


class JumpKind(StrEnum):
    """Dissipative channel types acting on one spin or an ordered spin pair."""

    RAISE = "raise"
    LOWER = "lower"
    EXCHANGE_UP = "exchange-up"  # I-^i I+^j
    EXCHANGE_DOWN = "exchange-down"  # I+^i I-^j

    @property
    def n_targets(self) -> int:
        return 1 if self in (JumpKind.RAISE, JumpKind.LOWER) else 2

    @property
    def factor_labels(self) -> tuple[str, ...]:
        """Single-spin operator labels applied to the targets in order."""
        return {
            JumpKind.RAISE: ("+",),
            JumpKind.LOWER: ("-",),
            JumpKind.EXCHANGE_UP: ("-", "+"),
            JumpKind.EXCHANGE_DOWN: ("+", "-"),
        }[self]


@dataclass(frozen=True)
class BathSpin:
    """Bath spin with its secular coupling ``a`` to the central spin (rad/time)."""

    index: int
    a: float
    position: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not math.isfinite(self.a):
            raise ValueError(f"bath spin {self.index}: coupling a must be finite")


@dataclass(frozen=True)
class CouplingGraph:
    """
    Intrabath couplings as an undirected edge list (i, j, J_ij).

    Edges are stored canonically with i < j; duplicates of an unordered pair
    and self-loops are rejected.
    """

    edges: tuple[tuple[int, int, float], ...] = ()

    def __post_init__(self):
        canonical = []
        seen = set()
        for i, j, coupling in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"coupling graph: self-loop on spin {i}")
            if not math.isfinite(coupling):
                raise ValueError(f"coupling graph: J_{i}{j} must be finite")
            pair = (min(i, j), max(i, j))
            if pair in seen:
                raise ValueError(f"coupling graph: duplicate edge {pair}")
            seen.add(pair)
            canonical.append((pair[0], pair[1], float(coupling)))
        object.__setattr__(self, "edges", tuple(canonical))

    def __len__(self) -> int:
        return len(self.edges)

    def within(self, indices: Iterable[int]) -> list[tuple[int, int, float]]:
        """Edges with both endpoints inside ``indices``."""
        members = set(indices)
        return [edge for edge in self.edges if edge[0] in members and edge[1] in members]

    def max_index(self) -> int:
        return max((j for _, j, _ in self.edges), default=-1)


@dataclass(frozen=True)
class JumpSpec:
    """A dissipative channel: jump kind, target spin(s), and rate (1/time)."""

    kind: JumpKind
    targets: tuple[int, ...]
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "kind", JumpKind(self.kind))
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if not math.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"jump {self.kind}: rate must be finite and >= 0, got {self.rate}")
        if len(self.targets) != self.kind.n_targets:
            raise ValueError(
                f"jump {self.kind}: expected {self.kind.n_targets} target(s), got {self.targets}"
            )
        if len(set(self.targets)) != len(self.targets):
            raise ValueError(f"jump {self.kind}: targets must be distinct, got {self.targets}")

    def with_rate(self, rate: float) -> JumpSpec:
        return dataclasses.replace(self, rate=rate)


@dataclass(frozen=True)
class PulseSchedule:
    """
    Instantaneous pi-pulses on the central spin.

    ``total_time`` is optional: coherence curves evaluate the schedule at each
    point of the time grid, so pulse times scale with the evolution time.
    """

    p: int = 0
    timing: PulseTiming = "cpmg"
    total_time: float | None = None

    def __post_init__(self):
        if self.p < 0:
            raise ValueError(f"pulse count must be >= 0, got {self.p}")
        if self.timing not in ("cpmg", "equidistant"):
            raise ValueError(f"unknown pulse timing '{self.timing}'")
        if self.total_time is not None and self.total_time < 0:
            raise ValueError(f"total_time must be >= 0, got {self.total_time}")

    def at(self, total_time: float) -> PulseSchedule:
        return dataclasses.replace(self, total_time=total_time)


def pulse_times(schedule: PulseSchedule, total_time: float | None = None) -> list[float]:
    """
    Pulse instants for a schedule over a total evolution time.

    CPMG places pulse k at T(2k-1)/(2p); equidistant places it at Tk/(p+1).

    Args:
        schedule: Pulse schedule
        total_time: Overrides ``schedule.total_time`` when given

    Returns:
        Strictly increasing pulse times inside (0, T); empty for p = 0
    """
    if schedule.p == 0:
        return []
    horizon = schedule.total_time if total_time is None else total_time
    if horizon is None:
        raise ValueError("pulse schedule needs a total_time")
    p = schedule.p
    if schedule.timing == "cpmg":
        return [horizon * (2 * k - 1) / (2 * p) for k in range(1, p + 1)]
    return [horizon * k / (p + 1) for k in range(1, p + 1)]


def _validate_single_spin_matrix(matrix: np.ndarray, index: int) -> np.ndarray:
    rho = np.array(matrix, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"bath state: spin {index} matrix must be 2x2, got {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise ValueError(f"bath state: spin {index} matrix has non-finite entries")
    if not np.allclose(rho, rho.conj().T, atol=1e-12):
        raise ValueError(f"bath state: spin {index} matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > 1e-12:
        raise ValueError(f"bath state: spin {index} matrix does not have unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-12:
        raise ValueError(f"bath state: spin {index} matrix is not positive semidefinite")
    return rho


def _haar_pure_state(rng: np.random.Generator) -> np.ndarray:
    amplitudes = rng.normal(size=2) + 1j * rng.normal(size=2)
    amplitudes /= np.linalg.norm(amplitudes)
    return np.outer(amplitudes, amplitudes.conj())


@dataclass(frozen=True, eq=False)
class BathState:
    """Product initial state of the bath: one 2x2 density matrix per spin."""

    kind: str
    matrices: tuple[np.ndarray, ...]
    seed: int | None = None

    def __post_init__(self):
        validated = tuple(
            _validate_single_spin_matrix(m, i) for i, m in enumerate(self.matrices)
        )
        for m in validated:
            m.setflags(write=False)
        object.__setattr__(self, "matrices", validated)

    def __len__(self) -> int:
        return len(self.matrices)

    @classmethod
    def neel(cls, n: int) -> BathState:
        """Alternating up/down product state, spin 0 up."""
        return cls("neel", tuple(SPIN_UP if i % 2 == 0 else SPIN_DOWN for i in range(n)))

    @classmethod
    def maximally_mixed(cls, n: int) -> BathState:
        return cls("maximally-mixed", tuple(MAXIMALLY_MIXED for _ in range(n)))

    @classmethod
    def random_product(cls, n: int, seed: int | None, pure: bool = True) -> BathState:
        """
        Random product state from a seeded generator.

        Args:
            n: Number of bath spins
            seed: Seed of the numpy generator
            pure: Haar-random pure states if True, random Iz eigenstates otherwise
        """
        rng = np.random.default_rng(seed)
        if pure:
            matrices = tuple(_haar_pure_state(rng) for _ in range(n))
            return cls("random-pure", matrices, seed)
        ups = rng.integers(0, 2, size=n)
        matrices = tuple(SPIN_UP if up else SPIN_DOWN for up in ups)
        return cls("random-basis", matrices, seed)

    @classmethod
    def explicit(cls, matrices: Sequence[np.ndarray]) -> BathState:
        return cls("explicit", tuple(np.asarray(m, dtype=complex) for m in matrices))

    def restricted(self, indices: Sequence[int]) -> list[np.ndarray]:
        return [self.matrices[i] for i in indices]


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """
    Complete description of a central spin experiment.

    Bath spin indices must be 0..n-1 in order, so an index doubles as the
    position of the spin in ``bath`` and in ``initial``.
    """

    bath: tuple[BathSpin, ...]
    graph: CouplingGraph = field(default_factory=CouplingGraph)
    jumps: tuple[JumpSpec, ...] = ()
    initial: BathState | None = None
    pulses: PulseSchedule = field(default_factory=PulseSchedule)
    time_grid: np.ndarray = field(default_factory=lambda: np.array([0.0]))
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        bath = tuple(self.bath)
        object.__setattr__(self, "bath", bath)
        object.__setattr__(self, "jumps", tuple(self.jumps))
        n = len(bath)
        for position, spin in enumerate(bath):
            if spin.index != position:
                raise ValueError(
                    f"bath spin indices must be 0..{n - 1} in order; "
                    f"found index {spin.index} at position {position}"
                )
        if self.graph.max_index() >= n:
            raise ValueError(f"coupling graph references spin {self.graph.max_index()} >= {n}")
        for jump in self.jumps:
            if any(t >= n or t < 0 for t in jump.targets):
                raise ValueError(f"jump {jump.kind} targets {jump.targets} outside bath of {n}")

        initial = self.initial if self.initial is not None else BathState.maximally_mixed(n)
        if len(initial) != n:
            raise ValueError(f"initial state has {len(initial)} spins, bath has {n}")
        object.__setattr__(self, "initial", initial)

        grid = np.asarray(self.time_grid, dtype=float).ravel()
        if grid.size == 0:
            raise ValueError("time grid must not be empty")
        if not np.all(np.isfinite(grid)) or grid[0] < 0:
            raise ValueError("time grid must be finite and start at t >= 0")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("time grid must be strictly increasing")
        grid.setflags(write=False)
        object.__setattr__(self, "time_grid", grid)
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def n_spins(self) -> int:
        return len(self.bath)

    @property
    def couplings(self) -> np.ndarray:
        return np.array([spin.a for spin in self.bath], dtype=float)

    @property
    def positions(self) -> np.ndarray | None:
        if not self.bath or any(spin.position is None for spin in self.bath):
            return None
        return np.array([spin.position for spin in self.bath], dtype=float)

    @property
    def is_dissipative(self) -> bool:
        return any(jump.rate > 0 for jump in self.jumps)

    def replace(self, **changes) -> SystemSpec:
        return dataclasses.replace(self, **changes)

    def coherent(self) -> SystemSpec:
        """Same system with every jump rate set to zero."""
        return self.replace(
            jumps=tuple(jump.with_rate(0.0) for jump in self.jumps),
            metadata={**self.metadata, "dissipation": "off"},
        )

    def with_rate(self, gamma: float) -> SystemSpec:
        """
        Same system with every single-spin jump at rate ``gamma``.

        Raise and lower channels are added for each spin when the system has none.
        """
        single = [jump for jump in self.jumps if jump.kind.n_targets == 1]
        pair = [jump for jump in self.jumps if jump.kind.n_targets == 2]
        if single:
            single = [jump.with_rate(gamma) for jump in single]
        else:
            single = list(relaxation_jumps(self.n_spins, gamma))
        return self.replace(jumps=tuple(single + pair), metadata={**self.metadata, "gamma": gamma})

    def to_dict(self) -> dict[str, Any]:
        """Plain-Python representation used by the explicit-spec config section."""
        return {
            "bath": [
                {
                    "index": spin.index,
                    "a": spin.a,
                    **({"position": list(spin.position)} if spin.position is not None else {}),
                }
                for spin in self.bath
            ],
            "edges": [[i, j, coupling] for i, j, coupling in self.graph.edges],
            "jumps": [
                {"kind": str(jump.kind), "targets": list(jump.targets), "rate": jump.rate}
                for jump in self.jumps
            ],
            "initial": {
                "kind": self.initial.kind,
                "seed": self.initial.seed,
                "matrices": [
                    [[[z.real, z.imag] for z in row] for row in matrix]
                    for matrix in self.initial.matrices
                ],
            },
            "pulses": {"p": self.pulses.p, "timing": self.pulses.timing},
            "time_grid": [float(t) for t in self.time_grid],
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SystemSpec:
        bath = tuple(
            BathSpin(
                index=int(item["index"]),
                a=float(item["a"]),
                position=tuple(item["position"]) if item.get("position") is not None else None,
            )
            for item in data["bath"]
        )
        initial_data = data.get("initial")
        initial = None
        if initial_data is not None:
            matrices = [
                np.array([[complex(re, im) for re, im in row] for row in matrix])
                for matrix in initial_data["matrices"]
            ]
            initial = BathState(
                initial_data.get("kind", "explicit"), tuple(matrices), initial_data.get("seed")
            )
        return cls(
            bath=bath,
            graph=CouplingGraph(tuple(tuple(edge) for edge in data.get("edges", []))),
            jumps=tuple(
                JumpSpec(JumpKind(item["kind"]), tuple(item["targets"]), float(item["rate"]))
                for item in data.get("jumps", [])
            ),
            initial=initial,
            pulses=PulseSchedule(**data.get("pulses", {})),
            time_grid=np.asarray(data.get("time_grid", [0.0]), dtype=float),
            metadata=data.get("metadata", {}),
        )


def relaxation_jumps(n: int, gamma: float) -> tuple[JumpSpec, ...]:
    """Raise and lower channels with a common rate on each of ``n`` spins."""
    jumps = []
    for i in range(n):
        jumps.append(JumpSpec(JumpKind.RAISE, (i,), gamma))
        jumps.append(JumpSpec(JumpKind.LOWER, (i,), gamma))
    return tuple(jumps)


def exchange_jumps(pairs: Iterable[tuple[int, int]], rate: float) -> tuple[JumpSpec, ...]:
    """Incoherent exchange I-^i I+^j and I+^i I-^j on each ordered pair."""
    jumps = []
    for i, j in pairs:
        jumps.append(JumpSpec(JumpKind.EXCHANGE_UP, (i, j), rate))
        jumps.append(JumpSpec(JumpKind.EXCHANGE_DOWN, (i, j), rate))
    return tuple(jumps)


def jump_factors(jump: JumpSpec, local_index: dict[int, int]) -> dict[int, np.ndarray]:
    """Map a jump onto local cluster sites as {site: 2x2 operator}."""
    return {
        local_index[target]: SPIN_HALF_OPERATORS[label]
        for target, label in zip(jump.targets, jump.kind.factor_labels, strict=True)
    }
