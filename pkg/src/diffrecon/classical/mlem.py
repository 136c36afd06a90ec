"""Maximum-likelihood expectation maximization for Poisson sinograms."""

import logging
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from diffrecon.errors import ConfigurationError, DomainError
from diffrecon.geometry.models import GridSpec, Image, Sinogram
from diffrecon.geometry.projector import Projector, get_projector


logger = logging.getLogger(__name__)


@dataclass
class MlemState:
    """Iterate after `iteration` multiplicative updates."""

    x: Image
    iteration: int
    clamped: int = 0  # OSL denominators clamped this iteration (MAPEM only)


def em_backprojection(
    projector: Projector, x: np.ndarray, y: np.ndarray, b: np.ndarray
) -> np.ndarray:
    """
    sum_i A_ij y_i / ([Ax]_i + b_i), with 0/0 bins contributing nothing.

    Raises:
        DomainError: If a bin with y_i > 0 has zero expected mean
    """
    ybar = projector.forward_array(x) + b
    bad = (ybar <= 0) & (y > 0)
    if np.any(bad):
        raise DomainError(f"{int(bad.sum())} bins with counts have zero expected mean")
    ratio = np.divide(y, ybar, out=np.zeros_like(ybar), where=ybar > 0)
    return projector.back_array(ratio)


def mlem_step(
    projector: Projector, x: np.ndarray, y: np.ndarray, b: np.ndarray, s: np.ndarray
) -> np.ndarray:
    """Array form of one MLEM update; voxels with S_j = 0 stay at 0."""
    bp = em_backprojection(projector, x, y, b)
    return np.divide(x * bp, s, out=np.zeros_like(x), where=s > 0)


def mlem_update(x: Image, y: Sinogram, b: Sinogram, S: Image) -> Image:
    """x_j <- (x_j / S_j) sum_i A_ij y_i / ([Ax]_i + b_i)."""
    projector = get_projector(x.grid, y.proj)
    return x.like(mlem_step(projector, x.values, y.values, b.values, S.values))


def uniform_init(projector: Projector, y: np.ndarray) -> np.ndarray:
    """Uniform image whose projection carries the measured total: sum_j S_j x_j = sum_i y_i."""
    s_total = projector.sensitivity_array().sum()
    y_total = float(np.sum(y))
    level = y_total / s_total if y_total > 0 and s_total > 0 else 1.0
    return np.full(projector.grid.shape, level)


def starting_point(
    y: Sinogram, x_init: Image | None, grid: GridSpec | None
) -> tuple[Projector, np.ndarray]:
    if x_init is not None:
        projector = get_projector(x_init.grid, y.proj)
        return projector, x_init.values.copy()
    if grid is None:
        raise ConfigurationError("Either x_init or grid is required to start MLEM")
    projector = get_projector(grid, y.proj)
    return projector, uniform_init(projector, y.values)


def mlem_iterates(
    y: Sinogram,
    b: Sinogram,
    n_iter: int,
    x_init: Image | None = None,
    *,
    grid: GridSpec | None = None,
) -> Iterator[MlemState]:
    """Yield the MLEM iterate after each of `n_iter` updates."""
    if n_iter < 1:
        raise ConfigurationError(f"n_iter must be >= 1, got {n_iter}")
    projector, x = starting_point(y, x_init, grid)
    s = projector.sensitivity_array()
    for it in range(1, n_iter + 1):
        x = mlem_step(projector, x, y.values, b.values, s)
        yield MlemState(Image(projector.grid, x), it)


def mlem(
    y: Sinogram,
    b: Sinogram,
    n_iter: int,
    x_init: Image | None = None,
    *,
    grid: GridSpec | None = None,
) -> Image:
    """Run `n_iter` MLEM updates from `x_init` (default: scale-matched uniform image)."""
    state = None
    for state in mlem_iterates(y, b, n_iter, x_init, grid=grid):
        pass
    return state.x
