from .deep import DsccaModel, compute_projections, dcca_loss, dcca_loss_grad, estimate_covariances, project
from .linear import LinearCcaModel, canonical_correlations, fit_linear_cca, transform
from .ranking import (
    RankingModel,
    RunningCcaState,
    cca_layer_forward,
    cosine_score_matrix,
    pairwise_ranking_loss,
    retrieve_topk,
)

__all__ = [
    "DsccaModel",
    "compute_projections",
    "dcca_loss",
    "dcca_loss_grad",
    "estimate_covariances",
    "project",
    "LinearCcaModel",
    "canonical_correlations",
    "fit_linear_cca",
    "transform",
    "RankingModel",
    "RunningCcaState",
    "cca_layer_forward",
    "cosine_score_matrix",
    "pairwise_ranking_loss",
    "retrieve_topk",
]
