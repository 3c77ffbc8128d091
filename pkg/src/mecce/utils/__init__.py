"""
Operator algebra utilities for cluster master equations.

This module provides Kronecker embedding, matrix exponentials, column-stacking
vectorization, and Lindblad superoperator assembly.
"""

from mecce.utils.operator_algebra import (
    PAULI,
    SPIN_HALF_OPERATORS,
    dissipator,
    embed_operators,
    expm,
    kron,
    lindblad_superoperator,
    spin_operator,
    unvec,
    vec,
)

__all__ = [
    "PAULI",
    "SPIN_HALF_OPERATORS",
    "dissipator",
    "embed_operators",
    "expm",
    "kron",
    "lindblad_superoperator",
    "spin_operator",
    "unvec",
    "vec",
]
