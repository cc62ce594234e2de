"""
Benchmark protocols: total canonical correlation and cross-view recall@k.
"""
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, model_validator

from dscca.cca.linear import canonical_correlations, fit_linear_cca, transform
from dscca.cca.ranking import DIRECTIONS, cosine_score_matrix, match_ranks
from dscca.data.datasets import ViewPairDataset
from dscca.numerics.linalg import Matrix, as_matrix
from dscca.utils.exception_handler import ShapeError
from dscca.utils.logging_utils import LoggingUtils, log_execution_time


class ProjectionModel(Protocol):
    d: int

    def project(self, X, view: int) -> Matrix: ...


class TotalCorrelationReport(BaseModel):
    per_component: List[float]
    total: float
    upper_bound: float
    posthoc_reg: Tuple[float, float]
    val_total: Optional[float] = None
    zero_variance_components: List[int] = []

    @model_validator(mode="after")
    def _check_total(self):
        if abs(self.total - sum(self.per_component)) > 1e-9:
            raise ValueError("total must equal the sum of the per-component correlations")
        if self.total > self.upper_bound + 1e-6:
            raise ValueError(f"total {self.total} exceeds the upper bound {self.upper_bound}")
        return self


class RecallReport(BaseModel):
    direction: str
    k_values: List[int]
    recalls: List[float]
    median_rank: float
    n_queries: int

    @model_validator(mode="after")
    def _check_recalls(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if len(self.k_values) != len(self.recalls):
            raise ValueError("one recall per k expected")
        if any(not 0.0 <= r <= 1.0 for r in self.recalls):
            raise ValueError("recalls must lie in [0, 1]")
        pairs = sorted(zip(self.k_values, self.recalls))
        if any(b[1] < a[1] for a, b in zip(pairs, pairs[1:])):
            raise ValueError("recall must be non-decreasing in k")
        return self

    def recall(self, k: int) -> float:
        return self.recalls[self.k_values.index(k)]


class RunSummary(BaseModel):
    n: int
    mean: float
    std: float
    min: float
    max: float


def _project_pair(model: ProjectionModel, data: ViewPairDataset) -> Tuple[Matrix, Matrix]:
    return model.project(data.view1, 1), model.project(data.view2, 2)


@log_execution_time("Eval")
def total_correlation_protocol(
    model: ProjectionModel,
    train: ViewPairDataset,
    test: ViewPairDataset,
    d: int,
    reg_grid: Sequence[float],
    val: Optional[ViewPairDataset] = None,
) -> TotalCorrelationReport:
    """
    Fit a linear CCA on the model's projected training samples and report the
    per-component correlations of the rotated test projections.

    The post-hoc regularizer is chosen from reg_grid by validation total
    correlation when val is given, otherwise the smallest grid value is used.
    """
    if model.d != d:
        raise ShapeError(f"model projects to {model.d} dimensions, protocol expects d={d}")
    if not reg_grid:
        raise ValueError("reg_grid is empty")
    P1, P2 = _project_pair(model, train)
    if val is not None and val.n_samples >= 2:
        V1, V2 = _project_pair(model, val)
        best_reg, best_total = None, -np.inf
        for reg in reg_grid:
            posthoc = fit_linear_cca(P1, P2, reg, reg, d)
            total = float(np.sum(canonical_correlations(transform(posthoc, V1, 1), transform(posthoc, V2, 2)).values))
            LoggingUtils.log_debug("Eval", "Post-hoc reg {reg:.1e}: val total {total:.4f}", reg=reg, total=total)
            if total > best_total:
                best_reg, best_total = float(reg), total
        reg, val_total = best_reg, best_total
    else:
        reg, val_total = float(min(reg_grid)), None

    posthoc = fit_linear_cca(P1, P2, reg, reg, d)
    T1, T2 = _project_pair(model, test)
    result = canonical_correlations(transform(posthoc, T1, 1), transform(posthoc, T2, 2))
    per_component = [float(v) for v in result.values]
    report = TotalCorrelationReport(
        per_component=per_component,
        total=float(sum(per_component)),
        upper_bound=float(d),
        posthoc_reg=(reg, reg),
        val_total=val_total,
        zero_variance_components=[int(i) for i in np.flatnonzero(result.zero_variance)],
    )
    LoggingUtils.log_success("Eval", "Total correlation {total:.4f} / {d}", total=report.total, d=d)
    return report


def recall_at_k(model: ProjectionModel, queries, targets, ks: Sequence[int], direction: str) -> RecallReport:
    """
    Fraction of queries whose paired target (same column index) is among
    the k best-scoring targets, for every k in ks.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    queries = as_matrix(queries, "queries")
    targets = as_matrix(targets, "targets")
    if queries.shape[1] == 0 or targets.shape[1] == 0:
        raise ShapeError("query and target sets must be non-empty")
    if queries.shape[1] != targets.shape[1]:
        raise ShapeError(f"{queries.shape[1]} queries but {targets.shape[1]} paired targets")
    source, target = (1, 2) if direction == "1to2" else (2, 1)
    scores = cosine_score_matrix(model.project(queries, source), model.project(targets, target)).scores
    ranks = match_ranks(scores)
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise ValueError(f"k values must be positive, got {ks}")
    return RecallReport(
        direction=direction,
        k_values=ks,
        recalls=[float(np.mean(ranks <= k)) for k in ks],
        median_rank=float(np.median(ranks)),
        n_queries=int(ranks.size),
    )


def recall_both_directions(model: ProjectionModel, data: ViewPairDataset, ks: Sequence[int]) -> List[RecallReport]:
    return [
        recall_at_k(model, data.view1, data.view2, ks, "1to2"),
        recall_at_k(model, data.view2, data.view1, ks, "2to1"),
    ]


def gap_closed(baseline_total: float, model_total: float, d: float) -> float:
    """Percentage of the baseline's remaining gap to the upper bound d closed by the model"""
    gap = d - baseline_total
    if gap <= 0:
        raise ValueError(f"baseline total {baseline_total} leaves no gap to d={d}")
    return 100.0 * (model_total - baseline_total) / gap


def summarize_runs(values: Sequence[float]) -> RunSummary:
    """Mean, sample standard deviation and range over repeated runs (e.g. seeds)"""
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        raise ValueError("no runs to summarize")
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return RunSummary(n=int(values.size), mean=float(values.mean()), std=std, min=float(values.min()), max=float(values.max()))
