"""
Ranking CCA.

A CCA layer whose projections are recomputed at every training step from
running-average covariance statistics, cosine scoring of the projected views,
the symmetric pairwise hinge loss, and top-k cross-view retrieval.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from dscca.cca.deep import CovarianceEstimates, cache_from_covariances, compute_projections
from dscca.config.constants import NumericConstants
from dscca.nn.core import EVAL, TRAIN
from dscca.nn.dsl import DslNetwork, project_features
from dscca.numerics.linalg import Matrix, Vector, as_matrix
from dscca.utils.exception_handler import NumericalError, ShapeError
from dscca.utils.logging_utils import LoggingUtils

DIRECTIONS = ("1to2", "2to1")


@dataclass
class RunningCcaState:
    """
    Exponential running averages of the unregularized batch covariances and means.
    The ridge terms are added when projections are computed.
    """

    sigma11: Optional[Matrix] = None
    sigma12: Optional[Matrix] = None
    sigma22: Optional[Matrix] = None
    mean1: Optional[Vector] = None
    mean2: Optional[Vector] = None
    alpha: float = 0.95
    initialized: bool = False
    updates: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")

    def update(self, F1: Matrix, F2: Matrix) -> None:
        n = F1.shape[1]
        mean1 = F1.mean(axis=1)
        mean2 = F2.mean(axis=1)
        F1c = F1 - mean1[:, None]
        F2c = F2 - mean2[:, None]
        batch = {
            "sigma11": F1c @ F1c.T / (n - 1),
            "sigma12": F1c @ F2c.T / (n - 1),
            "sigma22": F2c @ F2c.T / (n - 1),
            "mean1": mean1,
            "mean2": mean2,
        }
        for name, value in batch.items():
            if self.initialized:
                value = self.alpha * getattr(self, name) + (1.0 - self.alpha) * value
            setattr(self, name, value)
        self.sigma11 = 0.5 * (self.sigma11 + self.sigma11.T)
        self.sigma22 = 0.5 * (self.sigma22 + self.sigma22.T)
        self.initialized = True
        self.updates += 1
        if not all(np.all(np.isfinite(getattr(self, name))) for name in batch):
            raise NumericalError("running CCA statistics became non-finite")

    def projections(self, r1: float, r2: float, d: int) -> Tuple[Matrix, Matrix]:
        if not self.initialized:
            raise ShapeError("running CCA statistics are not initialized")
        cov = CovarianceEstimates(
            self.sigma11 + r1 * np.eye(self.sigma11.shape[0]),
            self.sigma12,
            self.sigma22 + r2 * np.eye(self.sigma22.shape[0]),
            r1,
            r2,
            0,
        )
        return compute_projections(cache_from_covariances(cov, d))

    def copy(self) -> "RunningCcaState":
        clone = RunningCcaState(alpha=self.alpha, initialized=self.initialized, updates=self.updates)
        for name in ("sigma11", "sigma12", "sigma22", "mean1", "mean2"):
            value = getattr(self, name)
            setattr(clone, name, None if value is None else value.copy())
        return clone


@dataclass
class CcaLayerTape:
    A1: Matrix
    A2: Matrix


def cca_layer_forward(
    state: RunningCcaState, F1, F2, r1: float, r2: float, d: int, mode: str = TRAIN
) -> Tuple[Matrix, Matrix, CcaLayerTape]:
    """
    Project a feature batch through the CCA layer.

    In train mode the running statistics absorb the batch first and the
    projections are recomputed from them. Eval mode uses the stored statistics.
    """
    F1 = as_matrix(F1, "F1")
    F2 = as_matrix(F2, "F2")
    if F1.shape[1] != F2.shape[1]:
        raise ShapeError(f"views have {F1.shape[1]} and {F2.shape[1]} samples")
    if mode == TRAIN:
        if F1.shape[1] <= d:
            raise ShapeError(f"CCA layer batch of {F1.shape[1]} must exceed d={d}")
        state.update(F1, F2)
    elif mode != EVAL:
        raise ValueError(f"unknown mode {mode!r}")
    elif not state.initialized:
        raise ShapeError("eval-mode CCA layer needs initialized running statistics")
    A1, A2 = state.projections(r1, r2, d)
    P1 = A1.T @ (F1 - state.mean1[:, None])
    P2 = A2.T @ (F2 - state.mean2[:, None])
    return P1, P2, CcaLayerTape(A1, A2)


def cca_layer_backward(tape: CcaLayerTape, dP1: Matrix, dP2: Matrix) -> Tuple[Matrix, Matrix]:
    """Projections and running means are constants of the step."""
    return tape.A1 @ dP1, tape.A2 @ dP2


class CosineScores(NamedTuple):
    scores: Matrix
    zero_columns1: np.ndarray
    zero_columns2: np.ndarray


def _normalize(P: Matrix) -> Tuple[Matrix, Vector, np.ndarray]:
    norms = np.sqrt(np.sum(P * P, axis=0))
    zero = norms <= NumericConstants.ZERO_NORM
    safe = np.where(zero, 1.0, norms)
    unit = P / safe
    unit[:, zero] = 0.0
    return unit, safe, zero


def cosine_score_matrix(P1, P2) -> CosineScores:
    """
    Cosine similarity of every column of P1 with every column of P2 (N × M).
    Columns of zero norm score 0 against everything and are flagged.
    """
    P1 = as_matrix(P1, "P1")
    P2 = as_matrix(P2, "P2")
    if P1.shape[0] != P2.shape[0]:
        raise ShapeError(f"projections have {P1.shape[0]} and {P2.shape[0]} rows")
    unit1, _, zero1 = _normalize(P1)
    unit2, _, zero2 = _normalize(P2)
    if np.any(zero1) or np.any(zero2):
        LoggingUtils.log_warning("Ranking", "Zero-norm projections scored as 0")
    return CosineScores(np.clip(unit1.T @ unit2, -1.0, 1.0), zero1, zero2)


def cosine_score_backward(P1: Matrix, P2: Matrix, dS: Matrix) -> Tuple[Matrix, Matrix]:
    unit1, norms1, zero1 = _normalize(P1)
    unit2, norms2, zero2 = _normalize(P2)
    dU1 = unit2 @ dS.T
    dU2 = unit1 @ dS
    dP1 = (dU1 - unit1 * np.sum(unit1 * dU1, axis=0)) / norms1
    dP2 = (dU2 - unit2 * np.sum(unit2 * dU2, axis=0)) / norms2
    dP1[:, zero1] = 0.0
    dP2[:, zero2] = 0.0
    return dP1, dP2


def pairwise_ranking_loss(S, margin: float) -> Tuple[float, Matrix]:
    """
    Symmetric hinge ranking loss over a batch score matrix with matches on the diagonal:

        Σᵢ Σ_{j≠i} max(0, m − Sᵢᵢ + Sᵢⱼ) + max(0, m − Sᵢᵢ + Sⱼᵢ)

    Returns:
        (loss, subgradient dS with 0 at the hinge kinks)
    """
    S = as_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise ShapeError(f"score matrix must be square, got {S.shape}")
    if margin < 0:
        raise ValueError(f"margin must be non-negative, got {margin}")
    n = S.shape[0]
    diagonal = np.diag(S)
    off = ~np.eye(n, dtype=bool)
    rows = (margin - diagonal[:, None] + S) * off
    cols = (margin - diagonal[:, None] + S.T) * off
    active_rows = (rows > 0) & off
    active_cols = (cols > 0) & off
    loss = float(np.sum(rows[active_rows]) + np.sum(cols[active_cols]))

    dS = active_rows.astype(np.float64) + active_cols.T.astype(np.float64)
    dS[np.diag_indices(n)] = -(active_rows.sum(axis=1) + active_cols.sum(axis=1))
    return loss, dS


@dataclass
class RankingModel:
    net1: DslNetwork
    net2: DslNetwork
    cca_state: RunningCcaState
    margin: float
    A1: Matrix
    A2: Matrix
    r1: float = 1e-4
    r2: float = 1e-4
    config: Dict[str, Any] = field(default_factory=dict)
    best_epoch: int = 0
    best_val_recall: float = float("nan")
    history: List[Dict[str, float]] = field(default_factory=list)
    best_epoch_per_k: Dict[int, int] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.A1.shape[1]

    def project(self, X, view: int) -> Matrix:
        """Eval-mode features through the frozen CCA layer."""
        if view not in (1, 2):
            raise ValueError(f"view must be 1 or 2, got {view}")
        net, A, mean = (
            (self.net1, self.A1, self.cca_state.mean1) if view == 1 else (self.net2, self.A2, self.cca_state.mean2)
        )
        F = project_features(net, as_matrix(X, f"view {view}"))
        return A.T @ (F - mean[:, None])


def _views(direction: str) -> Tuple[int, int]:
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    return (1, 2) if direction == "1to2" else (2, 1)


def rank_order(scores: Vector) -> np.ndarray:
    """Indices by descending score, ties by ascending index."""
    return np.lexsort((np.arange(scores.size), -scores))


def retrieve_topk(model, query, targets, direction: str, k: int) -> List[int]:
    """
    Indices of the k targets closest to the query by cosine similarity.

    The query and the targets are projected independently through their own views.
    """
    indices, _ = retrieve_topk_scored(model, query, targets, direction, k)
    return indices


def retrieve_topk_scored(model, query, targets, direction: str, k: int) -> Tuple[List[int], List[float]]:
    source, target = _views(direction)
    targets = as_matrix(targets, "targets")
    if targets.shape[1] == 0:
        raise ShapeError("target set is empty")
    if not 1 <= k <= targets.shape[1]:
        raise ShapeError(f"k={k} must lie in [1, {targets.shape[1]}]")
    q = model.project(query, source)
    if q.shape[1] != 1:
        raise ShapeError(f"expected a single query column, got {q.shape[1]}")
    scores = cosine_score_matrix(q, model.project(targets, target)).scores[0]
    order = rank_order(scores)[:k]
    return [int(i) for i in order], [float(scores[i]) for i in order]


def match_ranks(scores: Matrix) -> np.ndarray:
    """
    1-based rank of the matching target (same index) for every query row,
    under the descending-score, ascending-index order.
    """
    n = scores.shape[0]
    true = scores[np.arange(n), np.arange(n)]
    better = np.sum(scores > true[:, None], axis=1)
    tied_before = np.sum((scores == true[:, None]) & (np.arange(scores.shape[1])[None, :] < np.arange(n)[:, None]), axis=1)
    return better + tied_before + 1
