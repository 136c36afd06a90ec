"""Image-quality figures: PSNR, %contrast, white-matter CV and contrast recovery."""

import math

import numpy as np

from diffrecon.errors import ConfigurationError, DomainError
from diffrecon.geometry.models import Image
from diffrecon.metrics.models import RoiSet, as_values


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ConfigurationError(f"Image shapes differ: {a.shape} vs {b.shape}")


def psnr(truth: Image | np.ndarray, est: Image | np.ndarray) -> float:
    """
    10 log10(max(truth)^2 / MSE), with the peak taken over the ground truth.

    Returns math.inf when est equals truth.

    Raises:
        DomainError: If truth is all zero
    """
    k, e = as_values(truth), as_values(est)
    _same_shape(k, e)
    if not np.any(k):
        raise DomainError("PSNR is undefined for an all-zero ground truth")
    mse = float(np.mean((k - e) ** 2))
    if mse == 0.0:
        return math.inf
    peak = float(np.max(k))
    return 10.0 * math.log10(peak * peak / mse)


def gm_wm_ratio(x: Image | np.ndarray, rois: RoiSet) -> float:
    wm = rois.mean(x, "wm")
    if wm <= 0:
        raise DomainError(f"White-matter mean must be positive, got {wm}")
    return rois.mean(x, "gm") / wm


def percent_contrast(est: Image | np.ndarray, truth: Image | np.ndarray, rois: RoiSet) -> float:
    """(GM_est/WM_est - 1) / (GM_true/WM_true - 1) x 100."""
    reference = gm_wm_ratio(truth, rois) - 1.0
    if reference == 0.0:
        raise DomainError("Ground-truth GM/WM ratio is 1; %contrast is undefined")
    return (gm_wm_ratio(est, rois) - 1.0) / reference * 100.0


def cv(est: Image | np.ndarray, rois: RoiSet) -> float:
    """Population standard deviation over white matter divided by its mean."""
    values = as_values(est)[rois.get("wm")]
    mean = float(values.mean())
    if mean <= 0:
        raise DomainError(f"White-matter mean must be positive, got {mean}")
    return float(values.std()) / mean


def contrast_recovery(
    est: Image | np.ndarray, reference: Image | np.ndarray, roi: np.ndarray
) -> float:
    """ROI mean of the target image over the ROI mean of the reference image."""
    roi = np.asarray(roi, dtype=bool)
    if not roi.any():
        raise DomainError("Contrast-recovery ROI is empty")
    ref = float(as_values(reference)[roi].mean())
    if ref == 0.0:
        raise DomainError("Reference ROI mean is zero")
    return float(as_values(est)[roi].mean()) / ref
