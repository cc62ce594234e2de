from .logging_utils import LoggingUtils, log_execution_time
from .exception_handler import (
    CheckpointError,
    ConfigValidationError,
    DataFormatError,
    DsccaError,
    ExceptionHandler,
    NumericalError,
    ShapeError,
    TrainingAbortedError,
)

__all__ = [
    "LoggingUtils",
    "log_execution_time",
    "CheckpointError",
    "ConfigValidationError",
    "DataFormatError",
    "DsccaError",
    "ExceptionHandler",
    "NumericalError",
    "ShapeError",
    "TrainingAbortedError",
]
