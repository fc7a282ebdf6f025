"""Tests for the base runner and error hierarchy."""

import logging
from unittest.mock import patch

import pytest

from mllab.base import (
    BaseLab,
    DatasetError,
    DimensionMismatchError,
    MLLabError,
    NonFiniteValueError,
    NotPositiveDefiniteError,
    NumericalError,
    ParseError,
    ZeroTargetError,
)
from mllab.client import LabClient
from mllab.models import LabOptions, LogLevel


@pytest.mark.unit
class TestErrorHierarchy:
    """Tests for exception classes."""

    def test_numerical_errors(self):
        """Test numerical failures share NumericalError."""
        assert issubclass(NotPositiveDefiniteError, NumericalError)
        assert issubclass(ZeroTargetError, NumericalError)
        assert issubclass(NumericalError, MLLabError)

    def test_dimension_mismatch_is_value_error(self):
        """Test DimensionMismatchError is also a ValueError."""
        e = DimensionMismatchError("bad shape", expected=2, actual=3)
        assert isinstance(e, ValueError)
        assert (e.expected, e.actual) == (2, 3)

    def test_parse_error_location(self):
        """Test ParseError and NonFiniteValueError carry their cell."""
        e = ParseError("not a number", row=2, column=1)
        assert isinstance(e, DatasetError)
        assert (e.row, e.column) == (2, 1)
        assert NonFiniteValueError("nan", row=3, column=2).row == 3

    def test_not_positive_definite_details(self):
        """Test NotPositiveDefiniteError keeps the size and the largest jitter tried."""
        e = NotPositiveDefiniteError("failed", n=4, max_jitter=1e-3)
        assert e.n == 4
        assert e.max_jitter == 1e-3


@pytest.mark.unit
class TestBaseLab:
    """Tests for BaseLab functionality."""

    def test_default_options(self):
        """Test the default runner is sequential with warning-level logging."""
        lab = BaseLab()
        assert lab.options.max_workers == 1
        assert logging.getLogger("mllab").level == logging.WARNING

    def test_log_levels(self):
        """Test each log level maps to its logging level."""
        BaseLab(LabOptions(log_level=LogLevel.INFO))
        assert logging.getLogger("mllab").level == logging.INFO
        BaseLab(LabOptions(log_level=LogLevel.ERROR))
        assert logging.getLogger("mllab").level == logging.ERROR

    def test_single_handler(self):
        """Test repeated construction installs one handler."""
        BaseLab()
        BaseLab()
        handlers = [h for h in logging.getLogger("mllab").handlers if getattr(h, "_mllab", False)]
        assert len(handlers) == 1

    def test_sequential_map(self):
        """Test the sequential map keeps input order without a pool."""
        with patch("mllab.base.ThreadPoolExecutor") as pool:
            lab = BaseLab()
            assert lab.map(lambda x: x * x, [3, 1, 2]) == [9, 1, 4]
        pool.assert_not_called()

    def test_pooled_map_keeps_order(self):
        """Test the threaded map returns results in input order."""
        with BaseLab(LabOptions(max_workers=4)) as lab:
            assert lab.map(lambda x: -x, range(20)) == [-x for x in range(20)]

    def test_close_shuts_down_pool(self):
        """Test the context manager shuts the pool down."""
        with patch("mllab.base.ThreadPoolExecutor") as pool:
            pool.return_value.map.return_value = iter([1])
            with BaseLab(LabOptions(max_workers=2)) as lab:
                lab.map(lambda x: x, [1])
            pool.return_value.shutdown.assert_called_once_with(wait=True)

    def test_invalid_workers(self):
        """Test a worker count below one is refused."""
        with pytest.raises(ValueError):
            LabOptions(max_workers=0)


@pytest.mark.unit
class TestLabClient:
    """Tests for the lab client."""

    def test_sub_clients(self):
        """Test every command has a sub-client bound to the lab."""
        lab = LabClient()
        for name in ("fit", "sweep", "compare", "verify", "gradcheck", "recover"):
            assert getattr(lab, name)._client is lab
