"""Gaussian approximation of a target density by gradient descent on the spherical
Fisher distance ``arccos int sqrt(p q)``."""

from gap.core import (
    GapTrace,
    GaussianModel,
    OptimizerConfig,
    ScalarGaussian,
    TargetDensity,
    TraceRecord,
)
from gap.errors import GapError, NoConvergence
from gap.optimizer import GapResult, StopReason, gap1d_run, gap_run, gap_step

__all__ = [
    "GapError",
    "GapResult",
    "GapTrace",
    "GaussianModel",
    "NoConvergence",
    "OptimizerConfig",
    "ScalarGaussian",
    "StopReason",
    "TargetDensity",
    "TraceRecord",
    "gap1d_run",
    "gap_run",
    "gap_step",
]

__version__ = "0.1.0"
