"""CPOP Slope Changepoints Solver Package"""

# Local Library
from .engine import (
    Candidate,
    ChangeVector,
    CpopEngine,
    PruneOptions,
    Segmentation,
    compute_intervals,
    cpop,
    diagnostics_trace,
    inequality_prune,
    reconstruct_phis,
)
from .oracle import (
    cross_check,
    oracle_conditional_cost,
    oracle_exhaustive,
    oracle_fit_given_taus,
)

__all__ = [
    "Candidate",
    "ChangeVector",
    "CpopEngine",
    "PruneOptions",
    "Segmentation",
    "compute_intervals",
    "cpop",
    "cross_check",
    "diagnostics_trace",
    "inequality_prune",
    "oracle_conditional_cost",
    "oracle_exhaustive",
    "oracle_fit_given_taus",
    "reconstruct_phis",
]
