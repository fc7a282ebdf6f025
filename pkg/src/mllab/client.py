"""Main mllab entry point."""

from typing import Optional

from .base import BaseLab
from .experiments import (
    CompareClient,
    FitClient,
    GradCheckClient,
    RecoveryClient,
    SweepClient,
    VerifyClient,
)
from .models import LabOptions


class LabClient(BaseLab):
    """Experiment lab with one sub-client per command."""

    def __init__(self, options: Optional[LabOptions] = None):
        """Initialize the lab.

        Args:
            options: Logging and worker-pool options (default: LabOptions())
        """
        super().__init__(options)

        self.fit = FitClient(self)
        self.sweep = SweepClient(self)
        self.compare = CompareClient(self)
        self.verify = VerifyClient(self)
        self.gradcheck = GradCheckClient(self)
        self.recover = RecoveryClient(self)
