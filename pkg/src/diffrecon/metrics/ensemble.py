"""Realization ensembles and tradeoff curves."""

from collections.abc import Sequence

import numpy as np

from diffrecon.errors import ConfigurationError
from diffrecon.geometry.models import Image
from diffrecon.metrics.models import CurvePoint, EnsembleStats, RoiSet, as_values
from diffrecon.metrics.quantify import cv, percent_contrast, psnr


def ensemble_stats(realizations: Sequence[Image], truth: Image) -> EnsembleStats:
    if len(realizations) < 2:
        raise ConfigurationError(f"Need at least 2 realizations, got {len(realizations)}")
    if any(r.grid != truth.grid for r in realizations):
        raise ConfigurationError("Realizations and truth use different grids")
    stack = np.stack([r.values for r in realizations])
    mean = stack.mean(axis=0)
    return EnsembleStats(
        mean=truth.like(mean),
        bias=truth.like(mean - truth.values),
        std=truth.like(stack.std(axis=0)),
        n=len(realizations),
    )


def marker_protocol(method: str, T: int = 1000) -> list[float]:
    """
    Sweep values marked on a tradeoff curve.

    MLEM/MAPEM: iterations 10..100 step 10. DPS: lambda 0.4..2.0 step 0.2.
    DDIP: T' in {20, 40, 60, 80, 100, 200, 400, 600, 800, 1000} scaled by T/1000.
    """
    if method in ("mlem", "mapem"):
        return [float(i) for i in range(10, 101, 10)]
    if method == "dps":
        return [round(0.4 + 0.2 * k, 1) for k in range(9)]
    if method == "ddip":
        reference = (20, 40, 60, 80, 100, 200, 400, 600, 800, 1000)
        return [float(max(1, round(v * T / 1000))) for v in reference]
    raise ConfigurationError(f"No marker protocol for method '{method}'")


def contrast_cv_curve(
    runs: Sequence[tuple[float, Sequence[Image | np.ndarray]]],
    truth: Image | np.ndarray,
    rois: RoiSet,
) -> list[CurvePoint]:
    """
    Mean (%contrast, CV) per sweep point, ordered by sweep value.

    Args:
        runs: (sweep value, one image per realization) pairs
        truth: Ground-truth activity
        rois: GM and WM masks
    """
    points = []
    for value, images in sorted(runs, key=lambda run: run[0]):
        if not images:
            raise ConfigurationError(f"Sweep point {value} has no images")
        points.append(
            CurvePoint(
                sweep_value=float(value),
                percent_contrast=float(
                    np.mean([percent_contrast(im, truth, rois) for im in images])
                ),
                cv=float(np.mean([cv(im, rois) for im in images])),
            )
        )
    return points


def dominates(point: CurvePoint, curve: Sequence[CurvePoint]) -> bool:
    """True when `point` has lower CV than `curve` interpolated at the same %contrast."""
    ordered = sorted(curve, key=lambda p: p.percent_contrast)
    contrasts = np.array([p.percent_contrast for p in ordered])
    cvs = np.array([p.cv for p in ordered])
    return bool(point.cv < np.interp(point.percent_contrast, contrasts, cvs))


def mean_psnr(images: Sequence[Image | np.ndarray], truth: Image | np.ndarray) -> float:
    return float(np.mean([psnr(truth, as_values(im)) for im in images]))
