"""
Two-phase DS-DCCA training.

Epochs 1..T train the conventional parameters only (heads in warm-up mode);
afterwards the scaling networks join. The networks of the epoch with the
lowest full-set validation loss are kept, and the CCA projections are
computed once from the full training set.
"""
import time
from typing import Optional, Tuple

import numpy as np

from dscca.cca.deep import DsccaModel, dcca_loss, dcca_loss_grad, fit_projections
from dscca.config.experiment_config import ExperimentConfig
from dscca.data.datasets import ViewPairDataset
from dscca.nn.dsl import DslNetwork, dsl_network_backward, dsl_network_forward, project_features
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


def validation_loss(net1: DslNetwork, net2: DslNetwork, X1, X2, r1: float, r2: float, d: int) -> float:
    """DCCA loss of eval-mode features on a whole split in one pass"""
    loss, _ = dcca_loss(project_features(net1, X1), project_features(net2, X2), r1, r2, d)
    return loss


def _selection_split(data: ViewPairDataset) -> Tuple[np.ndarray, np.ndarray, bool]:
    if data.has_split("val"):
        X1, X2 = data.views("val")
        return X1, X2, True
    LoggingUtils.log_warning("DS-DCCA", "No validation split, selecting on the training loss")
    X1, X2 = data.views("train") if "train" in data.split else data.views()
    return X1, X2, False


@log_execution_time("DS-DCCA")
def train_dsdcca(config: ExperimentConfig, data: ViewPairDataset, tracker: Optional[MetricTracker] = None) -> DsccaModel:
    """
    Train both feature extractors on the DCCA loss.

    Raises:
        ShapeError: batch size or training split not larger than d
        TrainingAbortedError: non-finite loss or gradient
    """
    t, d = config.training, config.eval.d
    tracker = tracker or MetricTracker()
    X1, X2 = data.views("train") if "train" in data.split else data.views()
    V1, V2, has_val = _selection_split(data)
    n_train = X1.shape[1]
    check_batching(n_train, t.batch_size, d)

    net1, net2, resolved = build_networks(config, data.dims)
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
    LoggingUtils.log_progress(
        "DS-DCCA",
        "Training {variant} heads for {epochs} epochs (warm-up {warmup}) on {n} samples",
        variant=resolved.variant,
        epochs=t.epochs,
        warmup=resolved.warmup_epochs,
        n=n_train,
    )

    history = [{"epoch": 0, "phase": net1.head.mode, "train_loss": float("nan"),
                "val_loss": validation_loss(net1, net2, V1, V2, t.r1, t.r2, d)}]
    best = (float("inf"), 0, net1.copy(), net2.copy())
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
                    loss, cache = dcca_loss(F1, F2, t.r1, t.r2, d)
                except NumericalError as e:
                    raise TrainingAbortedError(f"loss evaluation failed: {e}", epoch, batch) from e
                if not np.isfinite(loss):
                    raise TrainingAbortedError("non-finite loss", epoch, batch)
                dF1, dF2 = dcca_loss_grad(cache)
                grads1, _ = dsl_network_backward(net1, tape1, dF1)
                grads2, _ = dsl_network_backward(net2, tape2, dF2)
                optimizer_step(net1, net2, grads1, grads2, optimizer, epoch, batch)
                batch_losses.append(loss)

            train_loss = float(np.mean(batch_losses))
            try:
                val_loss = validation_loss(net1, net2, V1, V2, t.r1, t.r2, d) if has_val else train_loss
            except NumericalError as e:
                raise TrainingAbortedError(f"validation loss failed: {e}", epoch, 0) from e
            improved = val_loss < best[0]
            if improved:
                best = (val_loss, epoch, net1.copy(), net2.copy())
            history.append({"epoch": epoch, "phase": net1.head.mode, "train_loss": train_loss, "val_loss": val_loss})
            tracker.capture(
                EpochEvent(
                    epoch=epoch,
                    phase=net1.head.mode,
                    train_loss=train_loss,
                    val_metric=val_loss,
                    best=improved,
                    seconds=time.perf_counter() - started,
                )
            )
            LoggingUtils.log_info(
                "DS-DCCA",
                "Epoch {epoch}/{epochs} [{phase}] train {train:.4f} val {val:.4f}{mark}",
                epoch=epoch,
                epochs=t.epochs,
                phase=net1.head.mode,
                train=train_loss,
                val=val_loss,
                mark=" *" if improved else "",
            )
    except TrainingAbortedError as e:
        LoggingUtils.log_error("DS-DCCA", "Training aborted: {error}", error=e)
        tracker.capture(RunFinalizeEvent(best_epoch=best[1], best_val_metric=best[0], epochs_run=epoch, aborted=True))
        raise

    best_loss, best_epoch, net1, net2 = best
    A1, A2, mean1, mean2, objective = fit_projections(net1, net2, X1, X2, t.r1, t.r2, d)
    tracker.capture(RunFinalizeEvent(best_epoch=best_epoch, best_val_metric=best_loss, epochs_run=t.epochs))
    LoggingUtils.log_success(
        "DS-DCCA",
        "Best epoch {epoch} (val loss {loss:.4f}), train objective {objective:.4f}",
        epoch=best_epoch,
        loss=best_loss,
        objective=objective,
    )
    return DsccaModel(net1, net2, A1, A2, mean1, mean2, config.to_dict(), best_epoch, best_loss, history)
