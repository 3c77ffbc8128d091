"""
Experiment orchestration: config-driven runs, sweeps, and the acceptance suite.
"""

from .experiment_backend import SWEEP_PARAMETERS, ExperimentBackend, RunRecord
from .verification import CHECK_NAMES, CheckResult, VerificationSuite

__all__ = [
    "CHECK_NAMES",
    "SWEEP_PARAMETERS",
    "CheckResult",
    "ExperimentBackend",
    "RunRecord",
    "VerificationSuite",
]
