"""mllab - exact GP marginal likelihood engine and experiment lab."""

__version__ = "1.0.0"

from .client import LabClient  # noqa: E402

__all__ = ["LabClient"]
