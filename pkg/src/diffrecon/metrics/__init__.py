"""Quantification: PSNR, %contrast, CV, contrast recovery, ensembles and curves."""

from diffrecon.metrics.ensemble import (
    contrast_cv_curve,
    dominates,
    ensemble_stats,
    marker_protocol,
    mean_psnr,
)
from diffrecon.metrics.models import CurvePoint, EnsembleStats, RoiSet
from diffrecon.metrics.quantify import contrast_recovery, cv, gm_wm_ratio, percent_contrast, psnr
from diffrecon.metrics.report import (
    CheckResult,
    RunMetrics,
    acceptance_checks,
    evaluate_run,
    psnr_grid_rows,
    rank_rows,
    tradeoff_curves,
)

__all__ = [
    "CheckResult",
    "CurvePoint",
    "EnsembleStats",
    "RoiSet",
    "RunMetrics",
    "acceptance_checks",
    "contrast_cv_curve",
    "contrast_recovery",
    "cv",
    "dominates",
    "ensemble_stats",
    "evaluate_run",
    "gm_wm_ratio",
    "marker_protocol",
    "mean_psnr",
    "percent_contrast",
    "psnr",
    "psnr_grid_rows",
    "rank_rows",
    "tradeoff_curves",
]
