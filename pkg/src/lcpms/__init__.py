"""Locally adaptive conformal prediction with per-point model selection.

Given a bank of fitted regressors and a calibration sample, the pipeline
builds a prediction set with finite-sample marginal coverage while choosing,
separately at every query point, whichever candidate yields the shortest
localized interval. See README.md for usage.
"""

from .core_types import (
    Dataset,
    GammaGrid,
    Interval,
    IntervalUnion,
    KernelFamily,
    KernelSpec,
    ModelFn,
)
from .lcp_core import build_profile, lcp_interval, weighted_quantile
from .models import NW5, PARAMETRIC10, LocalSinusoidModel, NWModel, build_model_bank
from .selection import (
    GammaBounds,
    SelectionEngine,
    SelectionResult,
    gamma_bounds,
    lcpms_interval,
)
from .simulation import (
    DGPFamily,
    DGPSpec,
    ResultRow,
    TableConfig,
    best_single_baseline,
    run_replication,
    run_table,
    split_conformal_lengths,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "GammaGrid",
    "Interval",
    "IntervalUnion",
    "KernelFamily",
    "KernelSpec",
    "ModelFn",
    "build_profile",
    "lcp_interval",
    "weighted_quantile",
    "NW5",
    "PARAMETRIC10",
    "LocalSinusoidModel",
    "NWModel",
    "build_model_bank",
    "GammaBounds",
    "SelectionEngine",
    "SelectionResult",
    "gamma_bounds",
    "lcpms_interval",
    "DGPFamily",
    "DGPSpec",
    "ResultRow",
    "TableConfig",
    "best_single_baseline",
    "run_replication",
    "run_table",
    "split_conformal_lengths",
    "__version__",
]
