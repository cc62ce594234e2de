"""
Experiment orchestration behind the CLI commands: dataset construction,
training dispatch, evaluation, artifact emission, sweeps and ablations.
"""
import csv
import itertools
import json
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel

from dscca.cca.deep import DsccaModel
from dscca.cca.ranking import RankingModel, retrieve_topk_scored
from dscca.config.constants import ExitCodes
from dscca.config.experiment_config import ExperimentConfig, with_overrides
from dscca.config.loader import ConfigLoader, dump_config
from dscca.data.datasets import ViewPairDataset, make_splits
from dscca.data.formats import load_views, read_idx_images, read_view, split_halves
from dscca.data.synthetic import synth_correlated
from dscca.evaluation.protocols import (
    RecallReport,
    RunSummary,
    TotalCorrelationReport,
    gap_closed,
    recall_both_directions,
    summarize_runs,
    total_correlation_protocol,
)
from dscca.persistence.checkpoint import save_checkpoint
from dscca.telemetry import MetricTracker, TelemetryEvent
from dscca.training import train_ds_ranking, train_dsdcca
from dscca.utils.exception_handler import (
    CheckpointError,
    ConfigValidationError,
    DataFormatError,
    NumericalError,
    ShapeError,
)
from dscca.utils.logging_utils import LoggingUtils

Model = Union[DsccaModel, RankingModel]
Listener = Callable[[TelemetryEvent], None]

CHECKPOINT_FILE = "checkpoint.dscca"
METRICS_FILE = "metrics.csv"
REPORT_FILE = "report.json"
CONFIG_FILE = "config.toml"

# ablation variants in reporting order; "original" is plain DCCA
ABLATION_RUNS = (
    ("original", "dcca", "none"),
    ("wide2", "dsdcca", "wide2"),
    ("wide12", "dsdcca", "wide12"),
    ("global_scale", "dsdcca", "global_scale"),
    ("scale_outputs", "dsdcca", "scale_outputs"),
    ("hypernet", "dsdcca", "hypernet"),
    ("no_warmup", "dsdcca", "no_warmup"),
    ("full", "dsdcca", "none"),
)


class ExperimentReport(BaseModel):
    mode: str
    ablation: str
    seed: int
    best_epoch: int
    selection_metric: float
    total_correlation: Optional[TotalCorrelationReport] = None
    recall: List[RecallReport] = []
    best_epoch_per_k: Dict[int, int] = {}

    def test_metric(self) -> float:
        """Total correlation, or mean recall@1 over both directions"""
        if self.total_correlation is not None:
            return self.total_correlation.total
        return sum(report.recall(1) for report in self.recall) / len(self.recall)


class ExperimentResult(BaseModel):
    exit_code: int
    run_dir: str
    report: Optional[ExperimentReport] = None
    error: Optional[str] = None


class SweepRow(BaseModel):
    overrides: Dict[str, Any]
    run_dir: str
    selection_metric: float


class SweepResult(BaseModel):
    rows: List[SweepRow]
    selected: int
    report: ExperimentReport


class AblationRow(BaseModel):
    name: str
    total: float
    gap_closed_by_full: Optional[float] = None


def resolve_output_root(config: ExperimentConfig, output_root: Optional[str] = None) -> Path:
    """--output-root, else DSCCA_OUTPUT_ROOT, else the config's system.output_root"""
    return Path(output_root or os.getenv("DSCCA_OUTPUT_ROOT") or config.system.output_root)


def run_name(config: ExperimentConfig) -> str:
    t = config.training
    return config.system.run_name or f"{t.mode}-{t.ablation}-seed{t.seed}"


def build_dataset(config: ExperimentConfig) -> ViewPairDataset:
    """Load or generate the configured views and split them"""
    ds = config.dataset
    if ds.source == "synthetic":
        data = synth_correlated(ds.n_samples, ds.latent_dim, tuple(ds.dims), ds.target_correlations, ds.nonlinearity, ds.data_seed)
    elif ds.source == "files":
        data = load_views(ds.path1, ds.path2, ds.format, ds.name)
    elif ds.source == "mnist":
        images = read_idx_images(ds.images_path, ds.max_samples)
        data = split_halves(images, ds.image_height, ds.image_width, ds.name or "mnist-halves")
    else:
        raise ConfigValidationError([f"unknown dataset.source {ds.source!r}"])
    return make_splits(data, ds.split, ds.split_seed)


def train_model(config: ExperimentConfig, data: ViewPairDataset, tracker: Optional[MetricTracker] = None) -> Model:
    if config.training.mode in ("dcca", "dsdcca"):
        return train_dsdcca(config, data, tracker)
    return train_ds_ranking(config, data, tracker)


def selection_metric(model: Model, config: ExperimentConfig, data: ViewPairDataset) -> float:
    """
    Higher is better. DCCA models score the total correlation of a linear CCA
    fit on their projected training split and applied to the validation split
    (the training split when there is no validation split); ranking models
    score their best mean validation recall@1.
    """
    if isinstance(model, RankingModel):
        return model.best_val_recall
    scored = data.subset("val") if data.has_split("val") else data.subset("train")
    report = total_correlation_protocol(model, data.subset("train"), scored, config.eval.d, config.eval.reg_grid)
    return report.total


def evaluate_model(model: Model, config: ExperimentConfig, data: ViewPairDataset) -> ExperimentReport:
    """Total-correlation protocol for DCCA models, recall@k for ranking models, on the test split"""
    t = config.training
    test = data.subset("test") if data.has_split("test") else data.subset("val")
    report = ExperimentReport(
        mode=t.mode, ablation=t.ablation, seed=t.seed, best_epoch=model.best_epoch,
        selection_metric=selection_metric(model, config, data),
    )
    if isinstance(model, DsccaModel):
        val = data.subset("val") if data.has_split("val") else None
        report.total_correlation = total_correlation_protocol(
            model, data.subset("train"), test, config.eval.d, config.eval.reg_grid, val
        )
    else:
        ks = [k for k in config.eval.k_values if k <= test.n_samples]
        report.recall = recall_both_directions(model, test, ks)
        report.best_epoch_per_k = dict(model.best_epoch_per_k)
    return report


def write_report(report: BaseModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _train_into(
    config: ExperimentConfig, data: ViewPairDataset, run_dir: Path, listeners: Sequence[Listener]
) -> Model:
    run_dir.mkdir(parents=True, exist_ok=True)
    dump_config(config, run_dir / CONFIG_FILE)
    with MetricTracker(run_dir / METRICS_FILE, listeners) as tracker:
        model = train_model(config, data, tracker)
    save_checkpoint(model, run_dir / CHECKPOINT_FILE)
    return model


def run_experiment(
    config: ExperimentConfig,
    output_root: Optional[str] = None,
    listeners: Sequence[Listener] = (),
    data: Optional[ViewPairDataset] = None,
) -> ExperimentResult:
    """
    Train, evaluate and write checkpoint.dscca, metrics.csv, report.json and
    config.toml into the run directory.

    Returns an ExperimentResult whose exit_code is 0 on success, 1 for an
    invalid config or unreadable input and 2 for a numerical abort.
    """
    run_dir = resolve_output_root(config, output_root) / run_name(config)
    try:
        config.validate(check_paths=data is None)
        data = data if data is not None else build_dataset(config)
        model = _train_into(config, data, run_dir, listeners)
        report = evaluate_model(model, config, data)
    except (ConfigValidationError, DataFormatError, CheckpointError, ShapeError) as e:
        LoggingUtils.log_error("Runner", "{error}", error=e)
        return ExperimentResult(exit_code=ExitCodes.CONFIG_ERROR, run_dir=str(run_dir), error=str(e))
    except NumericalError as e:
        LoggingUtils.log_error("Runner", "Numerical abort: {error}", error=e)
        return ExperimentResult(exit_code=ExitCodes.NUMERICAL_ABORT, run_dir=str(run_dir), error=str(e))
    write_report(report, run_dir / REPORT_FILE)
    LoggingUtils.log_success("Runner", "Artifacts written to {run_dir}", run_dir=run_dir)
    return ExperimentResult(exit_code=ExitCodes.SUCCESS, run_dir=str(run_dir), report=report)


def run_seeds(
    config: ExperimentConfig, seeds: Sequence[int], output_root: Optional[str] = None, listeners: Sequence[Listener] = ()
) -> Tuple[List[ExperimentResult], Optional[RunSummary]]:
    """One run per seed and a summary of the successful runs' test metric"""
    data = None
    results = []
    for seed in seeds:
        seeded = with_overrides(config, {"training.seed": int(seed)})
        if data is None:
            seeded.validate(check_paths=True)
            data = build_dataset(seeded)
        results.append(run_experiment(seeded, output_root, listeners, data))
    metrics = [r.report.test_metric() for r in results if r.report is not None]
    return results, summarize_runs(metrics) if metrics else None


def flatten_grid(grid: Dict[str, Any], prefix: str = "") -> Dict[str, List[Any]]:
    """Nested tables or dotted keys to {dotted path: candidate values}"""
    flat = {}
    for key, value in grid.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten_grid(value, path + "."))
        else:
            flat[path] = list(value) if isinstance(value, (list, tuple)) else [value]
    return flat


def load_grid(path: Union[str, Path]) -> Dict[str, List[Any]]:
    return flatten_grid(ConfigLoader().parse_file(path))


def sweep(
    config: ExperimentConfig,
    grid: Dict[str, List[Any]],
    output_root: Optional[str] = None,
    listeners: Sequence[Listener] = (),
) -> SweepResult:
    """
    Train every grid combination, select by the validation metric and
    evaluate the test split for the selected run only.
    """
    if not grid or any(len(values) == 0 for values in grid.values()):
        raise ConfigValidationError(["sweep grid is empty"])
    paths = sorted(grid)
    config.validate(check_paths=True)
    data = build_dataset(config)
    root = resolve_output_root(config, output_root) / f"sweep-{run_name(config)}"

    rows: List[SweepRow] = []
    best: Optional[Tuple[float, int, Model, ExperimentConfig]] = None
    for index, values in enumerate(itertools.product(*(grid[p] for p in paths))):
        overrides = dict(zip(paths, values))
        candidate = with_overrides(config, overrides)
        candidate.validate()
        run_dir = root / f"run{index:03d}"
        LoggingUtils.log_progress("Sweep", "Run {index}: {overrides}", index=index, overrides=overrides)
        model = _train_into(candidate, data, run_dir, listeners)
        metric = selection_metric(model, candidate, data)
        rows.append(SweepRow(overrides=overrides, run_dir=str(run_dir), selection_metric=metric))
        if best is None or metric > best[0]:
            best = (metric, index, model, candidate)

    _, selected, model, selected_config = best
    report = evaluate_model(model, selected_config, data)
    write_report(report, Path(rows[selected].run_dir) / REPORT_FILE)
    result = SweepResult(rows=rows, selected=selected, report=report)
    write_report(result, root / "sweep.json")
    LoggingUtils.log_success(
        "Sweep", "Selected run {index} {overrides}", index=selected, overrides=rows[selected].overrides
    )
    return result


def ablate(config: ExperimentConfig, output_root: Optional[str] = None, listeners: Sequence[Listener] = ()) -> List[AblationRow]:
    """
    Run plain DCCA and every dynamically-scaled variant on one config and
    report total correlation plus the share of each variant's remaining gap
    to d that the full model closes.
    """
    config.validate(check_paths=True)
    data = build_dataset(config)
    root = resolve_output_root(config, output_root) / f"ablate-seed{config.training.seed}"
    totals: Dict[str, float] = {}
    for name, mode, ablation in ABLATION_RUNS:
        variant = with_overrides(config, {"training.mode": mode, "training.ablation": ablation, "system.run_name": name})
        result = run_experiment(variant, str(root), listeners, data)
        if result.report is None:
            LoggingUtils.log_warning("Ablate", "{name} failed: {error}", name=name, error=result.error)
            continue
        totals[name] = result.report.total_correlation.total

    d = config.eval.d
    full = totals.get("full")
    rows = []
    for name, _, _ in ABLATION_RUNS:
        if name not in totals:
            continue
        closed = None
        if full is not None and name != "full" and totals[name] < d:
            closed = gap_closed(totals[name], full, d)
        rows.append(AblationRow(name=name, total=totals[name], gap_closed_by_full=closed))
    root.mkdir(parents=True, exist_ok=True)
    (root / "ablation.json").write_text(
        json.dumps([row.model_dump() for row in rows], indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return rows


def read_matrix(path: Union[str, Path]):
    """View file by extension: .csv is text, anything else the binary format"""
    return read_view(path, "csv" if str(path).endswith(".csv") else "binary")


def retrieve(model: Model, queries, targets, k: int, direction: str) -> List[Dict[str, Any]]:
    """Top-k rows (query_id, rank, target_id, score) for every query column"""
    rows = []
    for query_id in range(queries.shape[1]):
        indices, scores = retrieve_topk_scored(model, queries[:, query_id: query_id + 1], targets, direction, k)
        for rank, (target_id, score) in enumerate(zip(indices, scores), start=1):
            rows.append({"query_id": query_id, "rank": rank, "target_id": target_id, "score": score})
    return rows


def write_retrieval_csv(rows: List[Dict[str, Any]], path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["query_id", "rank", "target_id", "score"])
        writer.writeheader()
        writer.writerows(rows)
    return path
