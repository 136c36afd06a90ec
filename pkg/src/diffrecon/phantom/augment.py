"""Training-set augmentation: tissue uptake scaling followed by a random affine warp."""

import logging

import numpy as np
from scipy import ndimage

from diffrecon.errors import ConfigurationError
from diffrecon.geometry.models import GridSpec, Image
from diffrecon.phantom.generator import make_phantom
from diffrecon.phantom.models import AugmentParams, ContrastSpec, PhantomSample, TissueMasks
from diffrecon.seeding import stream_seed


logger = logging.getLogger(__name__)


# =============================================================================
# Constants
# =============================================================================

UPTAKE_RANGE = (0.8, 1.2)
SPATIAL_SCALE_RANGE = (0.9, 1.05)
ROTATION_RANGE_DEG = (-15.0, 15.0)
SHEAR_RANGE = (-0.15, 0.15)


def draw_augmentation(rng: np.random.Generator) -> AugmentParams:
    return AugmentParams(
        gm_scale=rng.uniform(*UPTAKE_RANGE),
        wm_scale=rng.uniform(*UPTAKE_RANGE),
        spatial_scale=rng.uniform(*SPATIAL_SCALE_RANGE),
        rotation_deg=rng.uniform(*ROTATION_RANGE_DEG),
        shear=rng.uniform(*SHEAR_RANGE),
    )


def _warp_matrix(params: AugmentParams) -> np.ndarray:
    """Forward (row, col) map: rotation @ shear @ isotropic scale."""
    theta = np.deg2rad(params.rotation_deg)
    rotation = np.array(
        [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    )
    shear = np.array([[1.0, params.shear], [0.0, 1.0]])
    return rotation @ shear * params.spatial_scale


def _warp(values: np.ndarray, forward: np.ndarray, order: int) -> np.ndarray:
    # affine_transform maps output coordinates to input coordinates.
    inverse = np.linalg.inv(forward)
    centre = (np.array(values.shape, dtype=np.float64) - 1.0) / 2.0
    offset = centre - inverse @ centre
    return ndimage.affine_transform(
        values, inverse, offset=offset, order=order, mode="constant", cval=0.0
    )


def apply_augmentation(sample: PhantomSample, params: AugmentParams) -> PhantomSample:
    """
    Apply one augmentation draw.

    Uptake is scaled per tissue first, then the same spatial transform warps
    activity, MR prior (bilinear) and label map (nearest neighbour). Outputs are
    clipped at zero.
    """
    masks = sample.masks
    uptake = np.where(masks.gm, params.gm_scale, 1.0) * np.where(
        masks.wm, params.wm_scale, 1.0
    )
    activity = sample.activity.values * uptake

    forward = _warp_matrix(params)
    activity = np.clip(_warp(activity, forward, order=1), 0.0, None)
    mr = np.clip(_warp(sample.mr_prior.values, forward, order=1), 0.0, None)
    labels = _warp(masks.labels(), forward, order=0).astype(np.uint8)

    grid = sample.activity.grid
    return PhantomSample(
        activity=Image(grid, activity),
        mr_prior=Image(grid, mr),
        masks=TissueMasks.from_labels(labels),
    )


def augment(sample: PhantomSample, rng_seed: int) -> PhantomSample:
    """Draw augmentation parameters from `rng_seed` and apply them."""
    return apply_augmentation(sample, draw_augmentation(np.random.default_rng(rng_seed)))


def make_training_set(
    n_base: int,
    expansion: int,
    contrast: ContrastSpec,
    seed: int,
    grid: GridSpec | None = None,
) -> list[PhantomSample]:
    """
    Generate `n_base` distinct phantoms, each expanded `expansion`-fold.

    The first copy of every base phantom is left unaugmented; the remaining
    `expansion - 1` copies are independent augmentation draws.
    """
    if n_base < 1 or expansion < 1:
        raise ConfigurationError(f"n_base and expansion must be >= 1, got {n_base}, {expansion}")
    grid = grid or GridSpec()

    samples: list[PhantomSample] = []
    for k in range(n_base):
        base_seed = stream_seed(seed, k)
        base = make_phantom(base_seed, contrast, grid)
        samples.append(base)
        for e in range(1, expansion):
            samples.append(augment(base, stream_seed(base_seed, e)))

    logger.info(f"Training set: {n_base} base phantoms x {expansion} = {len(samples)} samples")
    return samples
