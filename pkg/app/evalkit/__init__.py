"""CPOP Slope Changepoints Evaluation Package"""

# Local Library
from .metrics import (
    default_threshold,
    hausdorff_scaled,
    longest_segment,
    metrics_report,
    mse,
    tp_fp,
)
from .scenario import (
    Scenario,
    Truth,
    estimate_sigma,
    simulate,
    zigzag_knots,
    zigzag_scenario,
)

__all__ = [
    "Scenario",
    "Truth",
    "default_threshold",
    "estimate_sigma",
    "hausdorff_scaled",
    "longest_segment",
    "metrics_report",
    "mse",
    "simulate",
    "tp_fp",
    "zigzag_knots",
    "zigzag_scenario",
]
