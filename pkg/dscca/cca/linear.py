"""
Regularized linear CCA.

Used both as the classical baseline and as the post-hoc extractor fit on the
projected outputs of a deep model during evaluation.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from dscca.cca.deep import covariances_from_centered, whitened_cross_covariance
from dscca.config.constants import NumericConstants
from dscca.numerics.linalg import Matrix, Vector, as_matrix, center_columns
from dscca.utils.exception_handler import ShapeError
from dscca.utils.logging_utils import LoggingUtils


@dataclass(frozen=True)
class LinearCcaModel:
    A1: Matrix
    A2: Matrix
    mean1: Vector
    mean2: Vector
    correlations: Vector
    r1: float = 0.0
    r2: float = 0.0

    @property
    def d(self) -> int:
        return self.A1.shape[1]

    def project(self, X, view: int) -> Matrix:
        return transform(self, X, view)


class CanonicalCorrelations(NamedTuple):
    values: Vector
    zero_variance: np.ndarray


def fit_linear_cca(X1, X2, r1: float, r2: float, d: int) -> LinearCcaModel:
    """
    Fit linear CCA with ridge terms r₁I, r₂I on the view covariances.

    Args:
        X1: view 1, n₁ × N
        X2: view 2, n₂ × N
        r1, r2: non-negative regularization
        d: number of canonical components
    """
    X1 = as_matrix(X1, "X1")
    X2 = as_matrix(X2, "X2")
    if X1.shape[1] != X2.shape[1]:
        raise ShapeError(f"views have {X1.shape[1]} and {X2.shape[1]} samples")
    if X1.shape[1] < 2:
        raise ShapeError(f"linear CCA needs at least 2 samples, got {X1.shape[1]}")
    if d < 1 or d > min(X1.shape[0], X2.shape[0]):
        raise ShapeError(f"d={d} must lie in [1, {min(X1.shape[0], X2.shape[0])}]")
    if r1 < 0 or r2 < 0:
        raise ValueError(f"regularization must be non-negative, got r1={r1}, r2={r2}")

    X1c, mean1 = center_columns(X1)
    X2c, mean2 = center_columns(X2)
    cov = covariances_from_centered(X1c, X2c, r1, r2)
    inv11, inv22, _, decomposition = whitened_cross_covariance(cov.sigma11, cov.sigma12, cov.sigma22)
    A1 = inv11 @ decomposition.U[:, :d]
    A2 = inv22 @ decomposition.V[:, :d]
    correlations = np.clip(decomposition.singular_values[:d], 0.0, 1.0)
    return LinearCcaModel(A1, A2, mean1, mean2, correlations, float(r1), float(r2))


def transform(model: LinearCcaModel, X, view: int) -> Matrix:
    """Aⱼᵀ(X − meanⱼ)"""
    if view not in (1, 2):
        raise ValueError(f"view must be 1 or 2, got {view}")
    A, mean = (model.A1, model.mean1) if view == 1 else (model.A2, model.mean2)
    X = as_matrix(X, f"view {view}")
    if X.shape[0] != A.shape[0]:
        raise ShapeError(f"view {view} expects {A.shape[0]} rows, got {X.shape[0]}")
    return A.T @ (X - mean[:, None])


def canonical_correlations(P1, P2) -> CanonicalCorrelations:
    """
    Row-wise Pearson correlations of two projected views.

    A row with zero variance in either view gets correlation 0 and is flagged.
    """
    P1 = as_matrix(P1, "P1")
    P2 = as_matrix(P2, "P2")
    if P1.shape != P2.shape:
        raise ShapeError(f"projections differ in shape: {P1.shape} vs {P2.shape}")
    if P1.shape[1] < 2:
        raise ShapeError("correlations need at least 2 samples")
    C1 = P1 - P1.mean(axis=1, keepdims=True)
    C2 = P2 - P2.mean(axis=1, keepdims=True)
    norm1 = np.sqrt(np.sum(C1 * C1, axis=1))
    norm2 = np.sqrt(np.sum(C2 * C2, axis=1))
    denominator = norm1 * norm2
    zero = denominator <= NumericConstants.ZERO_NORM
    values = np.zeros(P1.shape[0])
    ok = ~zero
    values[ok] = np.sum(C1[ok] * C2[ok], axis=1) / denominator[ok]
    values = np.clip(values, -1.0, 1.0)
    if np.any(zero):
        LoggingUtils.log_warning("CCA", "{count} canonical components have zero variance", count=int(zero.sum()))
    return CanonicalCorrelations(values, zero)
