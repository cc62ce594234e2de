"""
DS-Ranking CCA training: end-to-end minimization of the symmetric pairwise
ranking loss through the running-statistics CCA layer.
"""
import time
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from dscca.cca.ranking import (
    RankingModel,
    RunningCcaState,
    cca_layer_backward,
    cca_layer_forward,
    cosine_score_backward,
    cosine_score_matrix,
    match_ranks,
    pairwise_ranking_loss,
)
from dscca.config.experiment_config import ExperimentConfig
from dscca.data.datasets import ViewPairDataset
from dscca.nn.dsl import dsl_network_backward, dsl_network_forward
from dscca.telemetry import EpochEvent, MetricTracker, RunFinalizeEvent, RunStartEvent
from dscca.training.common import (
    activate_heads,
    build_networks,
    check_batching,
    iterate_batches,
    make_optimizer,
    optimizer_step,
    shuffle_rng,
)
from dscca.utils.exception_handler import NumericalError, TrainingAbortedError
from dscca.utils.logging_utils import LoggingUtils, log_execution_time


def validation_recalls(model: RankingModel, X1, X2, ks: Sequence[int]) -> Dict[str, Dict[int, float]]:
    """recall@k in both directions on paired columns of X1, X2"""
    P1 = model.project(X1, 1)
    P2 = model.project(X2, 2)
    scores = cosine_score_matrix(P1, P2).scores
    recalls = {}
    for direction, matrix in (("1to2", scores), ("2to1", scores.T)):
        ranks = match_ranks(matrix)
        recalls[direction] = {int(k): float(np.mean(ranks <= k)) for k in ks}
    return recalls


def _snapshot(net1, net2, state: RunningCcaState, t, d) -> RankingModel:
    A1, A2 = state.projections(t.r1, t.r2, d)
    return RankingModel(net1.copy(), net2.copy(), state.copy(), t.margin, A1, A2, t.r1, t.r2)


@log_execution_time("DS-Ranking")
def train_ds_ranking(config: ExperimentConfig, data: ViewPairDataset, tracker: Optional[MetricTracker] = None) -> RankingModel:
    """
    Train both feature extractors and the CCA layer on the ranking loss.

    The model of the epoch with the best mean validation recall@1 over both
    directions is returned; the best epoch per k is recorded alongside.
    """
    t, d = config.training, config.eval.d
    ks = sorted(set(int(k) for k in config.eval.k_values) | {1})
    tracker = tracker or MetricTracker()
    X1, X2 = data.views("train") if "train" in data.split else data.views()
    has_val = data.has_split("val")
    V1, V2 = data.views("val") if has_val else (X1, X2)
    if not has_val:
        LoggingUtils.log_warning("DS-Ranking", "No validation split, selecting on training recall")
    ks = [k for k in ks if k <= V1.shape[1]]
    n_train = X1.shape[1]
    check_batching(n_train, t.batch_size, d)

    net1, net2, resolved = build_networks(config, data.dims)
    state = RunningCcaState(alpha=t.alpha)
    optimizer = make_optimizer(config)
    rng = shuffle_rng(t.seed)
    tracker.capture(
        RunStartEvent(
            mode=t.mode,
            ablation=t.ablation,
            variant=resolved.variant,
            seed=t.seed,
            epochs=t.epochs,
            warmup_epochs=resolved.warmup_epochs,
            batch_size=t.batch_size,
            n_train=n_train,
            n_val=V1.shape[1] if has_val else 0,
            parameters=net1.parameter_count() + net2.parameter_count(),
            scaler_parameters=net1.scaler_parameter_count() + net2.scaler_parameter_count(),
        )
    )

    history = []
    best: Tuple[float, int, Optional[RankingModel]] = (-1.0, 0, None)
    best_per_k = {k: (-1.0, 0) for k in ks}
    epoch = 0
    try:
        for epoch in range(1, t.epochs + 1):
            started = time.perf_counter()
            if epoch == resolved.warmup_epochs + 1:
                activate_heads(net1, net2, epoch)
            batch_losses = []
            for batch, idx in enumerate(iterate_batches(n_train, t.batch_size, rng), start=1):
                F1, tape1 = dsl_network_forward(net1, X1[:, idx])
                F2, tape2 = dsl_network_forward(net2, X2[:, idx])
                try:
                    P1, P2, cca_tape = cca_layer_forward(state, F1, F2, t.r1, t.r2, d)
                except NumericalError as e:
                    raise TrainingAbortedError(f"CCA layer failed: {e}", epoch, batch) from e
                scores = cosine_score_matrix(P1, P2).scores
                loss, dS = pairwise_ranking_loss(scores, t.margin)
                if not np.isfinite(loss):
                    raise TrainingAbortedError("non-finite loss", epoch, batch)
                dP1, dP2 = cosine_score_backward(P1, P2, dS)
                dF1, dF2 = cca_layer_backward(cca_tape, dP1, dP2)
                grads1, _ = dsl_network_backward(net1, tape1, dF1)
                grads2, _ = dsl_network_backward(net2, tape2, dF2)
                optimizer_step(net1, net2, grads1, grads2, optimizer, epoch, batch)
                batch_losses.append(loss)

            snapshot = _snapshot(net1, net2, state, t, d)
            recalls = validation_recalls(snapshot, V1, V2, ks)
            recall1 = 0.5 * (recalls["1to2"][1] + recalls["2to1"][1])
            improved = recall1 > best[0]
            if improved:
                best = (recall1, epoch, snapshot)
            for k in ks:
                mean_k = 0.5 * (recalls["1to2"][k] + recalls["2to1"][k])
                if mean_k > best_per_k[k][0]:
                    best_per_k[k] = (mean_k, epoch)
            train_loss = float(np.mean(batch_losses))
            history.append(
                {
                    "epoch": epoch,
                    "phase": net1.head.mode,
                    "train_loss": train_loss,
                    "val_recall1": recall1,
                    **{f"val_r{k}_{direction}": recalls[direction][k] for direction in recalls for k in ks},
                }
            )
            tracker.capture(
                EpochEvent(
                    epoch=epoch,
                    phase=net1.head.mode,
                    train_loss=train_loss,
                    val_metric=recall1,
                    best=improved,
                    seconds=time.perf_counter() - started,
                    val_recall_1to2=recalls["1to2"][1],
                    val_recall_2to1=recalls["2to1"][1],
                )
            )
            LoggingUtils.log_info(
                "DS-Ranking",
                "Epoch {epoch}/{epochs} [{phase}] loss {loss:.3f} val R@1 {r12:.3f}/{r21:.3f}{mark}",
                epoch=epoch,
                epochs=t.epochs,
                phase=net1.head.mode,
                loss=train_loss,
                r12=recalls["1to2"][1],
                r21=recalls["2to1"][1],
                mark=" *" if improved else "",
            )
    except TrainingAbortedError as e:
        LoggingUtils.log_error("DS-Ranking", "Training aborted: {error}", error=e)
        tracker.capture(RunFinalizeEvent(best_epoch=best[1], best_val_metric=best[0], epochs_run=epoch, aborted=True))
        raise

    best_recall, best_epoch, model = best
    model.config = config.to_dict()
    model.best_epoch = best_epoch
    model.best_val_recall = best_recall
    model.history = history
    model.best_epoch_per_k = {k: epoch_k for k, (_, epoch_k) in best_per_k.items()}
    tracker.capture(RunFinalizeEvent(best_epoch=best_epoch, best_val_metric=best_recall, epochs_run=t.epochs))
    LoggingUtils.log_success(
        "DS-Ranking", "Best epoch {epoch} (val R@1 {recall:.3f})", epoch=best_epoch, recall=best_recall
    )
    return model
