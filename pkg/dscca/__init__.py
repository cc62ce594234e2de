"""
dscca - Dynamically-scaled deep canonical correlation analysis.
"""

__version__ = "0.1.0"

from dscca.cca.deep import DsccaModel, compute_projections, dcca_loss, dcca_loss_grad, estimate_covariances
from dscca.cca.linear import LinearCcaModel, canonical_correlations, fit_linear_cca, transform
from dscca.cca.ranking import RankingModel, cosine_score_matrix, pairwise_ranking_loss, retrieve_topk
from dscca.config import ExperimentConfig, load_config
from dscca.data import ViewPairDataset, load_views, make_splits, split_halves, synth_correlated
from dscca.evaluation import recall_at_k, total_correlation_protocol
from dscca.persistence import load_checkpoint, save_checkpoint
from dscca.training import train_ds_ranking, train_dsdcca

__all__ = [
    "DsccaModel",
    "compute_projections",
    "dcca_loss",
    "dcca_loss_grad",
    "estimate_covariances",
    "LinearCcaModel",
    "canonical_correlations",
    "fit_linear_cca",
    "transform",
    "RankingModel",
    "cosine_score_matrix",
    "pairwise_ranking_loss",
    "retrieve_topk",
    "ExperimentConfig",
    "load_config",
    "ViewPairDataset",
    "load_views",
    "make_splits",
    "split_halves",
    "synth_correlated",
    "recall_at_k",
    "total_correlation_protocol",
    "load_checkpoint",
    "save_checkpoint",
    "train_ds_ranking",
    "train_dsdcca",
]
