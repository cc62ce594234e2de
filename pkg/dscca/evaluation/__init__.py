from .protocols import (
    RecallReport,
    RunSummary,
    TotalCorrelationReport,
    gap_closed,
    recall_at_k,
    recall_both_directions,
    summarize_runs,
    total_correlation_protocol,
)

__all__ = [
    "RecallReport",
    "RunSummary",
    "TotalCorrelationReport",
    "gap_closed",
    "recall_at_k",
    "recall_both_directions",
    "summarize_runs",
    "total_correlation_protocol",
]
