from typing import Optional

from pydantic import BaseModel


class TelemetryEvent(BaseModel):
    pass


class RunStartEvent(TelemetryEvent):
    mode: str
    ablation: str
    variant: str
    seed: int
    epochs: int
    warmup_epochs: int
    batch_size: int
    n_train: int
    n_val: int
    parameters: int
    scaler_parameters: int


class EpochEvent(TelemetryEvent):
    epoch: int
    phase: str
    train_loss: float
    val_metric: float
    best: bool
    seconds: float
    val_recall_1to2: Optional[float] = None
    val_recall_2to1: Optional[float] = None


class RunFinalizeEvent(TelemetryEvent):
    best_epoch: int
    best_val_metric: float
    epochs_run: int
    aborted: bool = False
