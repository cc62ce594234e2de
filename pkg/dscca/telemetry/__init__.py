from .events import EpochEvent, RunFinalizeEvent, RunStartEvent, TelemetryEvent
from .tracker import MetricTracker

__all__ = ["EpochEvent", "RunFinalizeEvent", "RunStartEvent", "TelemetryEvent", "MetricTracker"]
