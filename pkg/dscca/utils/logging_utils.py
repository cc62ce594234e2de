"""
Unified logging helpers.
Provides one message format and level handling for every dscca module.
"""
import logging
import time
from functools import wraps

logger = logging.getLogger("dscca")


class LoggingUtils:
    """Unified logging helper class"""

    @staticmethod
    def _format(context: str, message: str, marker: str = "", **kwargs) -> str:
        text = f"[{context}] {marker}{message}"
        return text.format(**kwargs) if kwargs else text

    @staticmethod
    def log_info(context: str, message: str, **kwargs) -> None:
        """
        Info message in the unified format

        Args:
            context: module or feature emitting the message
            message: message template
            **kwargs: template arguments
        """
        logger.info(LoggingUtils._format(context, message, **kwargs))

    @staticmethod
    def log_warning(context: str, message: str, **kwargs) -> None:
        """Warning message in the unified format"""
        logger.warning(LoggingUtils._format(context, message, **kwargs))

    @staticmethod
    def log_error(context: str, message: str, **kwargs) -> None:
        """Error message in the unified format"""
        logger.error(LoggingUtils._format(context, message, **kwargs))

    @staticmethod
    def log_debug(context: str, message: str, **kwargs) -> None:
        """Debug message in the unified format"""
        logger.debug(LoggingUtils._format(context, message, **kwargs))

    @staticmethod
    def log_success(context: str, message: str, **kwargs) -> None:
        """Success message (info level)"""
        logger.info(LoggingUtils._format(context, message, "✅ ", **kwargs))

    @staticmethod
    def log_progress(context: str, message: str, **kwargs) -> None:
        """Progress message (info level)"""
        logger.info(LoggingUtils._format(context, message, "🔄 ", **kwargs))


def log_execution_time(context: str, level: str = "debug"):
    """
    Decorator logging the wall time of the wrapped call.

    Args:
        context: context shown in the log prefix
        level: LoggingUtils level used for start/finish messages
    """

    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            start_time = time.perf_counter()
            log_func = getattr(LoggingUtils, f"log_{level}")
            log_func(context, f"Starting {func.__name__}")
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                elapsed = time.perf_counter() - start_time
                LoggingUtils.log_error(context, f"Failed {func.__name__} after {elapsed:.2f}s: {e}")
                raise
            elapsed = time.perf_counter() - start_time
            log_func(context, f"Completed {func.__name__} in {elapsed:.2f}s")
            return result

        return wrapper

    return decorator
