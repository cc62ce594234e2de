"""
Deep CCA objective.

Covariance estimation on mini-batches, the negated sum of the top-d singular
values of Ψ = Σ₁₁^{-1/2} Σ₁₂ Σ₂₂^{-1/2}, its analytic gradient with respect
to the (uncentered) features of both views, and the recovery of the
projection matrices A₁ = Σ₁₁^{-1/2} U, A₂ = Σ₂₂^{-1/2} V.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from dscca.config.constants import NumericConstants
from dscca.nn.dsl import DslNetwork, project_features
from dscca.numerics.linalg import Matrix, SvdResult, Vector, as_matrix, center_columns, svd, sym_inv_sqrt
from dscca.utils.exception_handler import ShapeError
from dscca.utils.logging_utils import LoggingUtils


@dataclass
class CovarianceEstimates:
    sigma11: Matrix
    sigma12: Matrix
    sigma22: Matrix
    r1: float
    r2: float
    N: int


@dataclass
class LossCache:
    F1_centered: Matrix
    F2_centered: Matrix
    covariances: CovarianceEstimates
    inv_sqrt11: Matrix
    inv_sqrt22: Matrix
    psi: Matrix
    svd: SvdResult
    d: int
    degenerate: bool = False

    @property
    def correlations(self) -> Vector:
        return self.svd.singular_values[: self.d]


def _check_pair(F1, F2) -> Tuple[Matrix, Matrix]:
    F1 = as_matrix(F1, "F1")
    F2 = as_matrix(F2, "F2")
    if F1.shape[1] != F2.shape[1]:
        raise ShapeError(f"views have {F1.shape[1]} and {F2.shape[1]} samples")
    if F1.shape[1] < 2:
        raise ShapeError(f"covariance estimation needs at least 2 samples, got {F1.shape[1]}")
    return F1, F2


def covariances_from_centered(F1c: Matrix, F2c: Matrix, r1: float, r2: float) -> CovarianceEstimates:
    """Σ₁₁ = F̄₁F̄₁ᵀ/(N−1) + r₁I, Σ₂₂ likewise, Σ₁₂ = F̄₁F̄₂ᵀ/(N−1)."""
    n = F1c.shape[1]
    scale = 1.0 / (n - 1)
    sigma11 = scale * (F1c @ F1c.T) + r1 * np.eye(F1c.shape[0])
    sigma22 = scale * (F2c @ F2c.T) + r2 * np.eye(F2c.shape[0])
    sigma12 = scale * (F1c @ F2c.T)
    return CovarianceEstimates(sigma11, sigma12, sigma22, float(r1), float(r2), n)


def estimate_covariances(F1, F2, r1: float, r2: float) -> Tuple[CovarianceEstimates, Matrix, Matrix]:
    """
    Center both views over the sample index and estimate regularized covariances.

    Returns:
        (covariances, centered F1, centered F2)
    """
    if r1 <= 0 or r2 <= 0:
        raise ValueError(f"regularization must be positive, got r1={r1}, r2={r2}")
    F1, F2 = _check_pair(F1, F2)
    F1c, _ = center_columns(F1)
    F2c, _ = center_columns(F2)
    return covariances_from_centered(F1c, F2c, r1, r2), F1c, F2c


def _is_degenerate(singular_values: Vector, d: int) -> bool:
    """Repeated values among the top d, or a tie across the truncation boundary."""
    s = singular_values
    if d > 1 and np.any(np.abs(np.diff(s[:d])) < NumericConstants.DEGENERATE_GAP):
        return True
    return d < s.size and abs(s[d - 1] - s[d]) < NumericConstants.DEGENERATE_GAP


def whitened_cross_covariance(
    sigma11: Matrix, sigma12: Matrix, sigma22: Matrix
) -> Tuple[Matrix, Matrix, Matrix, SvdResult]:
    """(Σ₁₁^{-1/2}, Σ₂₂^{-1/2}, Ψ, svd(Ψ))"""
    inv11 = sym_inv_sqrt(sigma11)
    inv22 = sym_inv_sqrt(sigma22)
    psi = inv11 @ sigma12 @ inv22
    return inv11, inv22, psi, svd(psi)


def cache_from_covariances(cov: CovarianceEstimates, d: int, F1c: Optional[Matrix] = None, F2c: Optional[Matrix] = None) -> LossCache:
    """Decompose Ψ for given covariances; the centered features are optional."""
    if d < 1 or d > min(cov.sigma11.shape[0], cov.sigma22.shape[0]):
        raise ShapeError(f"d={d} exceeds feature dimensions {cov.sigma11.shape[0]} and {cov.sigma22.shape[0]}")
    inv11, inv22, psi, decomposition = whitened_cross_covariance(cov.sigma11, cov.sigma12, cov.sigma22)
    degenerate = _is_degenerate(decomposition.singular_values, d)
    return LossCache(F1c, F2c, cov, inv11, inv22, psi, decomposition, d, degenerate)


def dcca_loss(F1, F2, r1: float, r2: float, d: int) -> Tuple[float, LossCache]:
    """
    Negated sum of the top-d canonical correlations of two feature batches.

    Returns:
        (loss in [−d, 0], cache for dcca_loss_grad and compute_projections)
    """
    cov, F1c, F2c = estimate_covariances(F1, F2, r1, r2)
    cache = cache_from_covariances(cov, d, F1c, F2c)
    loss = -float(np.sum(cache.correlations))
    return loss, cache


def dcca_loss_grad(cache: LossCache) -> Tuple[Matrix, Matrix]:
    """
    Gradient of dcca_loss with respect to the uncentered features.

    With U, σ, V the top-d singular triplets of Ψ:
        ∇₁₂ = Σ₁₁^{-1/2} U Vᵀ Σ₂₂^{-1/2}
        ∇₁₁ = −½ Σ₁₁^{-1/2} U diag(σ) Uᵀ Σ₁₁^{-1/2}
        ∂corr/∂F₁ = (2∇₁₁F̄₁ + ∇₁₂F̄₂) / (N−1)
    and symmetrically for view 2. The loss gradient is the negation, projected
    through the centering map.
    """
    if cache.F1_centered is None or cache.F2_centered is None:
        raise ShapeError("loss cache carries no features")
    if cache.degenerate:
        LoggingUtils.log_warning("DCCA", "Repeated singular values, using a subgradient")
    d = cache.d
    U = cache.svd.U[:, :d]
    V = cache.svd.V[:, :d]
    sigma = cache.svd.singular_values[:d]
    inv11, inv22 = cache.inv_sqrt11, cache.inv_sqrt22
    F1c, F2c = cache.F1_centered, cache.F2_centered

    grad12 = inv11 @ U @ V.T @ inv22
    left = inv11 @ U
    right = inv22 @ V
    grad11 = -0.5 * (left * sigma) @ left.T
    grad22 = -0.5 * (right * sigma) @ right.T

    scale = 1.0 / (cache.covariances.N - 1)
    dF1 = -scale * (2.0 * grad11 @ F1c + grad12 @ F2c)
    dF2 = -scale * (2.0 * grad22 @ F2c + grad12.T @ F1c)
    dF1 -= dF1.mean(axis=1, keepdims=True)
    dF2 -= dF2.mean(axis=1, keepdims=True)
    return dF1, dF2


def compute_projections(cache: LossCache) -> Tuple[Matrix, Matrix]:
    """A₁ = Σ₁₁^{-1/2}U_d, A₂ = Σ₂₂^{-1/2}V_d"""
    d = cache.d
    return cache.inv_sqrt11 @ cache.svd.U[:, :d], cache.inv_sqrt22 @ cache.svd.V[:, :d]


@dataclass
class DsccaModel:
    """Two trained feature extractors and the CCA projections of their outputs."""

    net1: DslNetwork
    net2: DslNetwork
    A1: Matrix
    A2: Matrix
    mean1: Vector
    mean2: Vector
    config: Dict[str, Any] = field(default_factory=dict)
    best_epoch: int = 0
    best_val_loss: float = float("nan")
    history: List[Dict[str, float]] = field(default_factory=list)

    @property
    def d(self) -> int:
        return self.A1.shape[1]

    def features(self, X, view: int) -> Matrix:
        net = self._network(view)
        return project_features(net, as_matrix(X, f"view {view}"))

    def project(self, X, view: int) -> Matrix:
        """f*ⱼ = Aⱼᵀ(fⱼ(x) − train feature mean), eval-mode and per sample."""
        A, mean = (self.A1, self.mean1) if view == 1 else (self.A2, self.mean2)
        return A.T @ (self.features(X, view) - mean[:, None])

    def _network(self, view: int) -> DslNetwork:
        if view not in (1, 2):
            raise ValueError(f"view must be 1 or 2, got {view}")
        return self.net1 if view == 1 else self.net2


def project(model: DsccaModel, X, view: int) -> Matrix:
    return model.project(X, view)


def fit_projections(net1: DslNetwork, net2: DslNetwork, X1, X2, r1: float, r2: float, d: int):
    """
    Projections of eval-mode features on a reference set.

    Returns:
        (A1, A2, mean1, mean2, objective) where objective is the sum of the top-d correlations
    """
    F1 = project_features(net1, X1)
    F2 = project_features(net2, X2)
    loss, cache = dcca_loss(F1, F2, r1, r2, d)
    A1, A2 = compute_projections(cache)
    return A1, A2, F1.mean(axis=1), F2.mean(axis=1), -loss
