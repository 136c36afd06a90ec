"""Shared fixtures: small geometries, a desk phantom and a tiny float64 score network."""

import numpy as np
import pytest
import torch

from diffrecon.diffusion.schedule import make_schedule
from diffrecon.geometry.models import GridSpec, Image, ProjSpec
from diffrecon.geometry.projector import get_projector
from diffrecon.phantom.generator import make_phantom
from diffrecon.phantom.models import AMYLOID_NEGATIVE_CONTRAST, FDG_CONTRAST
from diffrecon.score.network import ConvScoreNet


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_grid():
    return GridSpec(nx=8, ny=8, voxel_size=2.0)


@pytest.fixture
def tiny_proj():
    return ProjSpec(n_angles=8, n_bins=13, bin_width=2.0)


@pytest.fixture
def small_grid():
    return GridSpec(nx=16, ny=16, voxel_size=2.0)


@pytest.fixture
def small_proj():
    return ProjSpec(n_angles=12, n_bins=23, bin_width=2.0)


@pytest.fixture
def small_projector(small_grid, small_proj):
    return get_projector(small_grid, small_proj)


@pytest.fixture
def phantom_grid():
    return GridSpec(nx=32, ny=32, voxel_size=2.0)


@pytest.fixture
def fdg_phantom(phantom_grid):
    return make_phantom(7, FDG_CONTRAST, phantom_grid)


@pytest.fixture
def amyloid_phantom(phantom_grid):
    return make_phantom(7, AMYLOID_NEGATIVE_CONTRAST, phantom_grid)


@pytest.fixture
def blob_image(small_grid):
    """Smooth positive test object on the small grid."""
    ys, xs = np.mgrid[: small_grid.ny, : small_grid.nx]
    cy, cx = (small_grid.ny - 1) / 2, (small_grid.nx - 1) / 2
    values = 0.2 + np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / 18.0)
    return Image(small_grid, values)


@pytest.fixture
def short_schedule():
    return make_schedule(T=50, beta_start=1e-4, beta_end=0.2)


@pytest.fixture
def tiny_net():
    torch.manual_seed(0)
    return ConvScoreNet(hidden=8, time_dim=8).double().eval()
