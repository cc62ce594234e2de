import logging
import shutil
from typing import List, Optional

from rich.console import Console, Group
from rich.layout import Layout
from rich.live import Live
from rich.panel import Panel
from rich.progress_bar import ProgressBar
from rich.text import Text

from dscca.telemetry import EpochEvent, RunFinalizeEvent, RunStartEvent

MAX_LOG_LINES = 100


class LogHandler(logging.Handler):
    """
    Live terminal view of a training run: scrolling log, epoch progress and
    run status. Tracker events move the progress bar; log records fill the log.
    """

    def __init__(self, experiment: str, current_step: str = "Loading data...", console: Console = None):
        super().__init__()

        self.experiment = experiment
        self.current_step = current_step
        self.is_completed = False
        self.is_success = False
        self.console = console or Console()
        self.layout = self._create_layout()
        self.logs: List[str] = []

        self.epochs = 0
        self.epoch = 0
        self.warmup_epochs = 0
        self.best: Optional[str] = None

    def emit(self, record):
        self.logs.extend(self.format(record).splitlines())
        del self.logs[:-MAX_LOG_LINES]
        self.rerender()

    def render(self):
        return Live(self.layout, refresh_per_second=4, console=self.console)

    def rerender(self):
        self._update_layout()

    def update_step(self, step: str):
        self.current_step = step
        self.rerender()

    def finish(self, success: bool, step: str):
        self.is_completed = True
        self.is_success = success
        self.update_step(step)

    def _create_layout(self):
        layout = Layout()
        layout.split(
            Layout(name="logs"),
            Layout(name="progress", size=4),
            Layout(name="status", size=3),
        )
        return layout

    def _progress_panel(self) -> Panel:
        caption = Text(f"epoch {self.epoch}/{self.epochs or '?'}", style="bold")
        if self.warmup_epochs:
            phase = "warm-up" if self.epoch <= self.warmup_epochs else "scaled"
            caption.append(f"  {phase} (warm-up ends after {self.warmup_epochs})", style="dim")
        if self.best:
            caption.append(f"  best {self.best}", style="green")
        bar = ProgressBar(total=max(self.epochs, 1), completed=self.epoch)
        return Panel(Group(caption, bar), title=self.experiment, border_style="magenta", title_align="left", padding=(0, 1))

    def _status_panel(self) -> Panel:
        if not self.is_completed:
            marker, title, style = "⚡ ", "Status", "yellow"
        elif self.is_success:
            marker, title, style = "✓ ", "Completed", "green"
        else:
            marker, title, style = "✗ ", "Failed", "red"
        text = Text(marker, style=f"bold {style}")
        text.append(self.current_step)
        return Panel(text, title=title, border_style=style, title_align="left", padding=(0, 1), height=3)

    def _update_layout(self):
        try:
            terminal_height = shutil.get_terminal_size().lines
        except (OSError, ValueError):
            terminal_height = 24

        # progress panel + status panel + borders
        visible = max(8, terminal_height - 11)
        self.layout["logs"].update(
            Panel(
                "\n".join(self.logs[-visible:]) or "Waiting for the first epoch...",
                title=f"Training Log ({len(self.logs)} lines)",
                border_style="blue",
                title_align="left",
                padding=(0, 1),
                height=visible + 2,
            )
        )
        self.layout["progress"].update(self._progress_panel())
        self.layout["status"].update(self._status_panel())

    def handle_event(self, event):
        """Follow training progress from tracker events."""
        logger = logging.getLogger("dscca")

        if isinstance(event, RunStartEvent):
            self.epochs, self.epoch, self.warmup_epochs, self.best = event.epochs, 0, event.warmup_epochs, None
            self.current_step = f"Training {event.variant} heads, seed {event.seed}"
            logger.debug(f"🧮 {event.parameters} parameters, {event.scaler_parameters} in scaling networks")

        elif isinstance(event, EpochEvent):
            self.epoch = event.epoch
            self.current_step = f"Epoch {event.epoch} [{event.phase}] train {event.train_loss:.4f}"
            if event.best:
                self.best = f"{event.val_metric:.4f} @ {event.epoch}"
                logger.debug(f"💾 New best at epoch {event.epoch}")

        elif isinstance(event, RunFinalizeEvent):
            if event.aborted:
                self.current_step = f"Aborted after epoch {event.epochs_run}"
            else:
                self.current_step = f"Best epoch {event.best_epoch} ({event.best_val_metric:.4f})"

        self.rerender()
