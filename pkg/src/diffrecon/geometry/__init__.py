"""Discrete projection model and Poisson data simulation."""

from diffrecon.geometry.likelihood import (
    log_likelihood_from_mean,
    poisson_log_likelihood,
    simulate_counts,
    uniform_background,
)
from diffrecon.geometry.models import GridSpec, Image, ProjSpec, Sinogram
from diffrecon.geometry.projector import (
    Projector,
    back_project,
    forward_project,
    get_projector,
    sensitivity,
)

__all__ = [
    "GridSpec",
    "Image",
    "ProjSpec",
    "Projector",
    "Sinogram",
    "back_project",
    "forward_project",
    "get_projector",
    "log_likelihood_from_mean",
    "poisson_log_likelihood",
    "sensitivity",
    "simulate_counts",
    "uniform_background",
]
