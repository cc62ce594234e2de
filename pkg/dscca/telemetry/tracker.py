import csv
import logging
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

from .events import EpochEvent, TelemetryEvent

logger = logging.getLogger("dscca-telemetry")

EPOCH_COLUMNS = list(EpochEvent.model_fields)


class MetricTracker:
    """
    Per-epoch metric log. Epoch events are appended to a CSV file and flushed
    immediately so an aborted run leaves a readable trace; other events are
    kept in memory and logged.
    """

    def __init__(
        self,
        path: Optional[Union[str, Path]] = None,
        listeners: Sequence[Callable[[TelemetryEvent], None]] = (),
    ):
        self.path = Path(path) if path is not None else None
        self.listeners = list(listeners)
        self.events: List[TelemetryEvent] = []
        self._file = None
        self._writer = None

    def _open(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.path, "w", encoding="utf-8", newline="")
        self._writer = csv.DictWriter(self._file, fieldnames=EPOCH_COLUMNS)
        self._writer.writeheader()

    def capture(self, event: TelemetryEvent):
        self.events.append(event)
        event_name = type(event).__name__
        logger.debug(f"Captured event: {event_name} with properties: {event.model_dump()}")
        for listener in self.listeners:
            listener(event)
        if self.path is not None and isinstance(event, EpochEvent):
            try:
                if self._writer is None:
                    self._open()
                self._writer.writerow(event.model_dump())
                self.flush()
            except OSError as e:
                logger.error(f"Error writing metric log {self.path}: {e}")

    def flush(self):
        if self._file is not None:
            self._file.flush()

    def close(self):
        if self._file is not None:
            self._file.close()
            self._file = None
            self._writer = None

    def epochs(self) -> List[EpochEvent]:
        return [event for event in self.events if isinstance(event, EpochEvent)]

    def __enter__(self) -> "MetricTracker":
        return self

    def __exit__(self, *exc):
        self.close()
