"""
Operator algebra kernels for cluster and superoperator spaces.

This module provides the dense and sparse matrix building blocks used by the
master-equation engines: validated Kronecker products, the scaling-and-squaring
matrix exponential, column-stacking vectorization, spin-1/2 operators embedded
into many-spin Hilbert spaces, and Lindblad superoperator assembly.

Vectorization convention (fixed project-wide): columns are stacked, so that
vec(A @ X @ B) == kron(B.T, A) @ vec(X).
"""

import logging
from collections.abc import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import norm as sparse_norm

from mecce.config.settings import MAX_CLUSTER_ORDER

logger = logging.getLogger(__name__)

# Kronecker products are refused beyond the superoperator size of the largest cluster
MAX_OPERATOR_DIM = 4**MAX_CLUSTER_ORDER

# Spin-1/2 operators in the basis (|up>, |down>), Iz = sigma_z / 2
SPIN_HALF_OPERATORS = {
    "i": np.eye(2, dtype=complex),
    "z": np.array([[0.5, 0.0], [0.0, -0.5]], dtype=complex),
    "x": np.array([[0.0, 0.5], [0.5, 0.0]], dtype=complex),
    "y": np.array([[0.0, -0.5j], [0.5j, 0.0]], dtype=complex),
    "+": np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex),
    "-": np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex),
}

# Pauli matrices for the central spin
PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}

Operator = np.ndarray | sp.spmatrix | sp.sparray


def as_complex_matrix(matrix, name: str = "matrix") -> np.ndarray:
    """
    Validate and convert input to a finite two-dimensional complex array.

    Args:
        matrix: Array-like input
        name: Label used in error messages

    Returns:
        C-contiguous complex128 array

    Raises:
        ValueError: If the input is not two-dimensional or has NaN/Inf entries
    """
    array = np.asarray(matrix, dtype=complex)
    if array.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(array)


def as_complex_vector(vector, length: int | None = None, name: str = "vector") -> np.ndarray:
    """Validate and convert input to a finite one-dimensional complex array."""
    array = np.asarray(vector, dtype=complex)
    if array.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {array.shape}")
    if length is not None and array.shape[0] != length:
        raise ValueError(f"{name} has length {array.shape[0]}, expected {length}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains non-finite entries")
    return array


def kron(a, b) -> np.ndarray:
    """
    Kronecker product of two finite complex matrices.

    Args:
        a: Left factor with shape (ra, ca)
        b: Right factor with shape (rb, cb)

    Returns:
        Dense matrix with shape (ra * rb, ca * cb)

    Raises:
        ValueError: If an input is not finite or the product exceeds MAX_OPERATOR_DIM
    """
    left = as_complex_matrix(a, "left factor")
    right = as_complex_matrix(b, "right factor")
    rows = left.shape[0] * right.shape[0]
    cols = left.shape[1] * right.shape[1]
    if max(rows, cols) > MAX_OPERATOR_DIM:
        raise ValueError(
            f"Kronecker product of dimension {rows}x{cols} exceeds the limit "
            f"{MAX_OPERATOR_DIM} set by MAX_CLUSTER_ORDER={MAX_CLUSTER_ORDER}"
        )
    return np.kron(left, right)


def expm(generator, t: float = 1.0) -> np.ndarray:
    """
    Matrix exponential exp(generator * t) by scaling and squaring with Padé approximants.

    Non-Hermitian Lindblad generators rule out eigendecomposition, so the
    scaling-and-squaring kernel of scipy is used for every input.

    Args:
        generator: Square finite complex matrix
        t: Non-negative duration

    Returns:
        Dense propagator with the shape of the generator

    Raises:
        ValueError: If the generator is not square, not finite, or t is negative
    """
    matrix = as_complex_matrix(generator, "generator")
    if matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"generator must be square, got shape {matrix.shape}")
    if not np.isfinite(t) or t < 0:
        raise ValueError(f"duration must be finite and non-negative, got {t}")
    if t == 0:
        return np.eye(matrix.shape[0], dtype=complex)
    return scipy.linalg.expm(matrix * t)


def vec(matrix) -> np.ndarray:
    """Stack the columns of a matrix into a vector."""
    array = as_complex_matrix(matrix)
    return array.reshape(-1, order="F")


def unvec(vector, rows: int, cols: int) -> np.ndarray:
    """
    Inverse of vec: rebuild a (rows, cols) matrix from its stacked columns.

    Raises:
        ValueError: If the vector length does not equal rows * cols
    """
    array = as_complex_vector(vector)
    if array.shape[0] != rows * cols:
        raise ValueError(
            f"cannot unvec a vector of length {array.shape[0]} into {rows}x{cols}"
        )
    return array.reshape((rows, cols), order="F")


def embed_operators(factors: dict[int, np.ndarray], n_sites: int) -> sp.csr_matrix:
    """
    Embed single-site operators into an n-site spin-1/2 Hilbert space.

    Sites absent from ``factors`` carry the identity; site 0 is the leftmost
    Kronecker factor.

    Args:
        factors: Mapping of site index to 2x2 operator
        n_sites: Number of spin-1/2 sites

    Returns:
        Sparse CSR operator of dimension 2**n_sites
    """
    if n_sites < 1:
        raise ValueError("n_sites must be at least 1")
    for site in factors:
        if not 0 <= site < n_sites:
            raise ValueError(f"site {site} outside 0..{n_sites - 1}")

    result = sp.identity(1, dtype=complex, format="csr")
    identity = sp.identity(2, dtype=complex, format="csr")
    for site in range(n_sites):
        factor = sp.csr_matrix(factors[site]) if site in factors else identity
        result = sp.kron(result, factor, format="csr")
    return result


def spin_operator(label: str, site: int, n_sites: int) -> sp.csr_matrix:
    """Spin-1/2 operator ``label`` (one of i, x, y, z, +, -) acting on ``site``."""
    if label not in SPIN_HALF_OPERATORS:
        raise ValueError(f"unknown spin operator '{label}'")
    return embed_operators({site: SPIN_HALF_OPERATORS[label]}, n_sites)


def left_multiplication(operator: Operator) -> sp.csr_matrix:
    """Superoperator of X -> A @ X."""
    dim = operator.shape[0]
    return sp.kron(sp.identity(dim, dtype=complex), sp.csr_matrix(operator), format="csr")


def right_multiplication(operator: Operator) -> sp.csr_matrix:
    """Superoperator of X -> X @ B."""
    dim = operator.shape[0]
    return sp.kron(sp.csr_matrix(operator).T, sp.identity(dim, dtype=complex), format="csr")


def dissipator(jump: Operator) -> sp.csr_matrix:
    """
    Superoperator of D[L](X) = L X L^dag - 1/2 {L^dag L, X}.

    Acts identically on full and projected density matrices, since the jump
    operators only touch the bath.
    """
    jump = sp.csr_matrix(jump)
    jump_dag = jump.conj().T.tocsr()
    number = (jump_dag @ jump).tocsr()
    sandwich = sp.kron(jump.conj(), jump, format="csr")
    return (
        sandwich - 0.5 * left_multiplication(number) - 0.5 * right_multiplication(number)
    ).tocsr()


def lindblad_superoperator(
    h_left: Operator,
    h_right: Operator,
    jumps: Sequence[tuple[float, Operator]] = (),
) -> sp.csr_matrix:
    """
    Generator G of d vec(X)/dt for dX/dt = -i H_l X + i X H_r + sum_k g_k D[L_k](X).

    With h_left == h_right this is the ordinary GKSL Liouvillian; with distinct
    branch Hamiltonians it drives a projected off-diagonal block.

    Args:
        h_left: Hamiltonian acting from the left
        h_right: Hamiltonian acting from the right
        jumps: Sequence of (rate, jump operator) pairs

    Returns:
        Sparse CSR superoperator of dimension dim**2
    """
    if h_left.shape != h_right.shape:
        raise ValueError(f"branch dimensions differ: {h_left.shape} vs {h_right.shape}")
    generator = -1j * left_multiplication(h_left) + 1j * right_multiplication(h_right)
    for rate, jump in jumps:
        if rate < 0:
            raise ValueError(f"jump rate must be non-negative, got {rate}")
        if rate == 0:
            continue
        if jump.shape != h_left.shape:
            raise ValueError(
                f"jump operator shape {jump.shape} does not match Hamiltonian {h_left.shape}"
            )
        generator = generator + rate * dissipator(jump)
    return sp.csr_matrix(generator)


def frobenius_norm(operator: Operator) -> float:
    """Frobenius norm for dense or sparse operators."""
    if sp.issparse(operator):
        return float(sparse_norm(operator, "fro"))
    return float(np.linalg.norm(operator, "fro"))


def is_hermitian(operator: Operator, atol: float = 1e-12) -> bool:
    """Check Hermiticity of a dense or sparse operator to absolute tolerance."""
    if sp.issparse(operator):
        difference = sp.csr_matrix(operator - operator.conj().T)
        return bool(difference.nnz == 0 or np.max(np.abs(difference.data)) <= atol)
    dense = np.asarray(operator)
    return bool(np.allclose(dense, dense.conj().T, atol=atol, rtol=0.0))
