"""
Spin bath models: domain types and generators for chains, lattices and NV surfaces.
"""

from .builders import build_chain, build_disjoint_pairs, build_lattice2d, build_nv_surface
from .system import (
    BathSpin,
    BathState,
    CouplingGraph,
    JumpKind,
    JumpSpec,
    PulseSchedule,
    SystemSpec,
    exchange_jumps,
    pulse_times,
    relaxation_jumps,
)

__all__ = [
    "BathSpin",
    "BathState",
    "CouplingGraph",
    "JumpKind",
    "JumpSpec",
    "PulseSchedule",
    "SystemSpec",
    "build_chain",
    "build_disjoint_pairs",
    "build_lattice2d",
    "build_nv_surface",
    "exchange_jumps",
    "pulse_times",
    "relaxation_jumps",
]
