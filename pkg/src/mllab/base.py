"""Errors and the base runner shared by every mllab front end."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from .models import LabOptions, LogLevel

T = TypeVar("T")
R = TypeVar("R")


class MLLabError(Exception):
    """Base exception for mllab errors."""

    pass


class NumericalError(MLLabError):
    """Exception raised when a numerical routine cannot produce a valid result."""

    pass


class NotPositiveDefiniteError(NumericalError):
    """Exception raised when the jitter schedule is exhausted."""

    def __init__(self, message: str, n: Optional[int] = None, max_jitter: Optional[float] = None):
        super().__init__(message)
        self.n = n
        self.max_jitter = max_jitter


class NoConvergenceError(NumericalError):
    """Exception raised when the symmetric eigen-solver fails to converge."""

    pass


class ZeroTargetError(NumericalError):
    """Exception raised when a profiled quantity is requested for all-zero targets."""

    pass


class DimensionMismatchError(MLLabError, ValueError):
    """Exception raised for incompatible array shapes."""

    def __init__(self, message: str, expected: Optional[int] = None, actual: Optional[int] = None):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class MissingNetworkError(MLLabError):
    """Exception raised when a deep kernel is evaluated without network weights."""

    pass


class DatasetError(MLLabError):
    """Exception raised for unreadable or invalid input data."""

    pass


class ParseError(DatasetError):
    """Exception raised for a cell that is not a number.

    Rows and columns are 1-based; the header is row 1.
    """

    def __init__(self, message: str, row: int, column: int):
        super().__init__(message)
        self.row = row
        self.column = column


class NonFiniteValueError(DatasetError):
    """Exception raised for a NaN or infinite cell."""

    def __init__(self, message: str, row: int, column: int):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyFileError(DatasetError):
    """Exception raised for an input file without data rows."""

    pass


class ConfigError(MLLabError):
    """Exception raised for invalid run configuration values."""

    pass


class BaseLab:
    """Base runner owning logging setup and the worker pool."""

    def __init__(self, options: Optional[LabOptions] = None):
        """Initialize the base runner.

        Args:
            options: Runner options (default: LabOptions())
        """
        self.options = options or LabOptions()
        self._executor: Optional[ThreadPoolExecutor] = None

        self._logger = logging.getLogger("mllab")
        if self.options.enable_logging:
            self._setup_logging()

    def __enter__(self) -> "BaseLab":
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:  # type: ignore[no-untyped-def]
        self.close()

    def _setup_logging(self) -> None:
        """Setup logging configuration."""
        if not any(getattr(h, "_mllab", False) for h in self._logger.handlers):
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter("[mllab][%(levelname)s] %(message)s"))
            handler._mllab = True  # type: ignore[attr-defined]
            self._logger.addHandler(handler)

        if self.options.log_level == LogLevel.ERROR:
            self._logger.setLevel(logging.ERROR)
        elif self.options.log_level == LogLevel.WARN:
            self._logger.setLevel(logging.WARNING)
        else:
            self._logger.setLevel(logging.INFO)

    def close(self) -> None:
        """Shut down the worker pool."""
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """Apply fn to every item, returning results in input order.

        Args:
            fn: Function to apply
            items: Inputs

        Returns:
            List of results, ordered like the inputs
        """
        if self.options.max_workers <= 1:
            return [fn(item) for item in items]

        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self.options.max_workers)
        return list(self._executor.map(fn, items))
