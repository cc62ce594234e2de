"""
Exception types and unified handling.
Every failure raised by dscca derives from DsccaError so callers (and the CLI
exit-code mapping) can classify it.
"""
import logging
from typing import Any, Iterable, Optional

logger = logging.getLogger("dscca")


class DsccaError(Exception):
    """Base class of every dscca failure"""


class ShapeError(DsccaError, ValueError):
    """Dimension or shape mismatch, empty input"""


class NumericalError(DsccaError, ArithmeticError):
    """Non-finite values, failed decompositions, indefinite matrices"""


class TrainingAbortedError(NumericalError):
    """Training hit a non-finite loss"""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(f"{message} (epoch {epoch}, batch {batch})")
        self.epoch = epoch
        self.batch = batch


class ConfigValidationError(DsccaError, ValueError):
    """Configuration violates one or more constraints"""

    def __init__(self, errors: Iterable[str]):
        self.errors = list(errors)
        super().__init__("Invalid configuration:\n  - " + "\n  - ".join(self.errors))


class DataFormatError(DsccaError, ValueError):
    """Malformed data file"""

    def __init__(self, path: str, detail: str, line: Optional[int] = None, offset: Optional[int] = None):
        where = ""
        if line is not None:
            where = f" (line {line})"
        elif offset is not None:
            where = f" (offset {offset})"
        super().__init__(f"{path}{where}: {detail}")
        self.path = path
        self.line = line
        self.offset = offset


class CheckpointError(DsccaError):
    """Unreadable, truncated or mismatched checkpoint"""


class ExceptionHandler:
    """Unified exception handler"""

    @staticmethod
    def handle_file_operation_error(
        error: Exception, context: str, reraise: bool = False, return_value: Any = False
    ) -> Any:
        """
        Handle a file operation failure

        Args:
            error: the exception
            context: context shown in the log prefix
            reraise: re-raise after logging
            return_value: value returned when not re-raising
        """
        logger.warning(f"[{context}] File operation failed: {type(error).__name__}: {error}")
        if reraise:
            raise error
        return return_value

    @staticmethod
    def handle_data_parsing_error(
        error: Exception, context: str, reraise: bool = False, return_value: Any = None
    ) -> Any:
        """Handle a parsing failure"""
        logger.debug(f"[{context}] Data parsing failed: {type(error).__name__}: {error}")
        if reraise:
            raise error
        return return_value

