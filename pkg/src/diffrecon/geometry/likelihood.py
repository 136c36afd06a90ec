"""Poisson data model: log-likelihood, count simulation and background sinograms."""

import logging

import numpy as np

from diffrecon.errors import ConfigurationError, DomainError
from diffrecon.geometry.models import Image, ProjSpec, Sinogram
from diffrecon.geometry.projector import get_projector


logger = logging.getLogger(__name__)


def log_likelihood_from_mean(y: np.ndarray, ybar: np.ndarray) -> float:
    """
    Poisson log-likelihood sum_i y_i log(ybar_i) - ybar_i, without the log(y!) term.

    Bins with ybar_i = 0 and y_i = 0 contribute 0.

    Raises:
        DomainError: If some bin has y_i > 0 but ybar_i = 0
    """
    bad = (ybar <= 0) & (y > 0)
    if np.any(bad):
        raise DomainError(
            f"{int(bad.sum())} bins have counts but zero expected mean; likelihood is -inf"
        )
    positive = ybar > 0
    return float(
        np.sum(y[positive] * np.log(ybar[positive])) - np.sum(ybar[positive])
    )


def poisson_log_likelihood(y: Sinogram, x: Image, b: Sinogram) -> float:
    """L(y|x) = sum_i y_i log([Ax]_i + b_i) - ([Ax]_i + b_i)."""
    projector = get_projector(x.grid, y.proj)
    ybar = projector.forward_array(x.values) + b.values
    return log_likelihood_from_mean(y.values, ybar)


def simulate_counts(
    ybar: Sinogram,
    count_target: float,
    rng_seed: int | np.random.Generator,
    background: Sinogram | None = None,
) -> tuple[Sinogram, float]:
    """
    Scale expected counts to a total and draw independent Poisson counts per bin.

    Args:
        ybar: Noise-free expected counts (non-negative)
        count_target: Desired total expected counts after scaling
        rng_seed: Seed (or generator) owned by this realization
        background: Additive mean b in count units, not scaled

    Returns:
        (measured counts, applied scale); divide reconstructions by the scale to
        report them in the units of ybar's source image
    """
    if count_target <= 0:
        raise ConfigurationError(f"count_target must be positive, got {count_target}")
    total = ybar.total
    if total <= 0:
        raise ConfigurationError("Expected sinogram is all zero; cannot scale to a count level")
    if np.any(ybar.values < 0):
        raise ConfigurationError("Expected sinogram has negative bins")

    scale = count_target / total
    rng = np.random.default_rng(rng_seed)
    mean = ybar.values * scale
    if background is not None:
        mean = mean + background.values
    counts = rng.poisson(mean).astype(np.float64)
    return ybar.like(counts), scale


def uniform_background(proj: ProjSpec, fraction: float, ybar_total: float) -> Sinogram:
    """Uniform randoms b_i = c with sum_i b_i = fraction * ybar_total."""
    if fraction < 0:
        raise ConfigurationError(f"Background fraction must be >= 0, got {fraction}")
    return Sinogram.full(proj, fraction * ybar_total / proj.n_bins_total)
