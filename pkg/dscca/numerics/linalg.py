"""
Dense real linear algebra primitives.

Matrices are float64 numpy arrays whose columns are samples. Decompositions
are delegated to numpy; this module fixes ordering and sign conventions so
that downstream projections are deterministic.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.typing import NDArray

from dscca.config.constants import NumericConstants
from dscca.utils.exception_handler import NumericalError, ShapeError
from dscca.utils.logging_utils import LoggingUtils

Matrix = NDArray[np.float64]
Vector = NDArray[np.float64]


@dataclass(frozen=True)
class SymEigResult:
    """Eigenvalues in descending order with orthonormal eigenvector columns"""

    eigenvalues: Vector
    eigenvectors: Matrix


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD, M = U·diag(s)·Vᵀ, singular values descending"""

    U: Matrix
    singular_values: Vector
    V: Matrix


def as_matrix(X, name: str = "matrix") -> Matrix:
    """Coerce to a finite 2-D float64 array."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NumericalError(f"{name} contains non-finite entries")
    return A


def center_columns(X) -> Tuple[Matrix, Vector]:
    """
    Subtract the per-row mean taken over the sample (column) index.

    Returns:
        (centered matrix, mean vector)
    """
    X = as_matrix(X, "X")
    if X.size == 0 or X.shape[1] < 1:
        raise ShapeError("cannot center an empty matrix")
    mean = X.mean(axis=1)
    return X - mean[:, None], mean


def _require_square(S: Matrix, name: str) -> None:
    if S.shape[0] != S.shape[1]:
        raise ShapeError(f"{name} must be square, got {S.shape}")


def sym_eig(S) -> SymEigResult:
    """
    Eigendecomposition of a symmetric matrix, eigenvalues descending.

    The input is symmetrized as (S + Sᵀ)/2 before decomposition.
    """
    S = as_matrix(S, "S")
    _require_square(S, "S")
    S = 0.5 * (S + S.T)
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(S)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"symmetric eigendecomposition did not converge: {e}") from e
    order = np.argsort(eigenvalues, kind="stable")[::-1]
    return SymEigResult(eigenvalues[order], eigenvectors[:, order])


def sym_inv_sqrt(S, clamp: float = NumericConstants.EIG_CLAMP, relative: bool = True) -> Matrix:
    """
    Symmetric inverse square root V·diag(max(λ, floor)^(-1/2))·Vᵀ.

    Args:
        S: symmetric positive (semi-)definite matrix
        clamp: eigenvalue floor; relative to the largest eigenvalue when relative=True
        relative: interpret clamp relative to the largest eigenvalue

    Raises:
        NumericalError: an eigenvalue lies below -floor
    """
    if clamp <= 0:
        raise ValueError(f"clamp must be positive, got {clamp}")
    eig = sym_eig(S)
    lam = eig.eigenvalues
    scale = max(float(lam[0]), 0.0) if relative and lam.size else 1.0
    floor = clamp * scale if scale > 0 else clamp
    if lam.size and lam[-1] < -floor:
        raise NumericalError(f"matrix is indefinite: smallest eigenvalue {lam[-1]:.3e} < -{floor:.3e}")
    clamped = lam < floor
    if np.any(clamped):
        LoggingUtils.log_debug("linalg", "Clamped {count} eigenvalues to {floor:.3e}", count=int(clamped.sum()), floor=floor)
    inv_sqrt = 1.0 / np.sqrt(np.maximum(lam, floor))
    V = eig.eigenvectors
    result = (V * inv_sqrt) @ V.T
    return 0.5 * (result + result.T)


def svd(M) -> SvdResult:
    """
    Thin SVD with descending singular values and a deterministic sign:
    the largest-magnitude entry of every U column is positive.
    """
    M = as_matrix(M, "M")
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"SVD did not converge: {e}") from e
    V = Vt.T
    if U.size:
        pivots = np.argmax(np.abs(U), axis=0)
        signs = np.sign(U[pivots, np.arange(U.shape[1])])
        signs[signs == 0] = 1.0
        U = U * signs
        V = V * signs
    return SvdResult(U, s, V)


def random_orthogonal(n: int, rng: np.random.Generator) -> Matrix:
    """Haar-distributed orthogonal matrix from the QR of a Gaussian matrix."""
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))
