"""Procedural 2D brain-like phantoms with a matching MR-like anatomical prior."""

import logging

import numpy as np
from scipy import ndimage

from diffrecon.geometry.models import GridSpec, Image
from diffrecon.phantom.models import (
    LABEL_BACKGROUND,
    LABEL_CSF,
    LABEL_GM,
    LABEL_PUTAMEN,
    LABEL_WM,
    ContrastSpec,
    PhantomSample,
    TissueMasks,
)


logger = logging.getLogger(__name__)


# =============================================================================
# Constants
# =============================================================================

# MR-like intensities per tissue; independent of tracer contrast.
MR_LEVELS = {
    LABEL_BACKGROUND: 0.0,
    LABEL_CSF: 0.15,
    LABEL_GM: 0.55,
    LABEL_PUTAMEN: 0.55,
    LABEL_WM: 0.9,
}
BIAS_FIELD_AMPLITUDE = 0.05

HEAD_SEMI_AXES = (0.78, 0.92)
BRAIN_RADIUS = 0.9
WM_RADIUS = 0.64


def _normalized_coords(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Voxel-centre coordinates in [-1, 1], y along rows and x along columns."""
    ys = (np.arange(grid.ny) + 0.5) / grid.ny * 2.0 - 1.0
    xs = (np.arange(grid.nx) + 0.5) / grid.nx * 2.0 - 1.0
    return np.meshgrid(ys, xs, indexing="ij")


def _ellipse(y, x, cy, cx, ry, rx) -> np.ndarray:
    return ((y - cy) / ry) ** 2 + ((x - cx) / rx) ** 2 <= 1.0


def make_labels(seed: int, grid: GridSpec) -> np.ndarray:
    """
    Brain-like label map: elliptical head, CSF rim and ventricles, a folded grey
    matter ribbon around the white matter, and two putamen-like deep nuclei.

    Deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    y, x = _normalized_coords(grid)

    ax = HEAD_SEMI_AXES[0] * (1.0 + rng.uniform(-0.05, 0.05))
    ay = HEAD_SEMI_AXES[1] * (1.0 + rng.uniform(-0.05, 0.05))
    rho = np.sqrt((x / ax) ** 2 + (y / ay) ** 2)
    phi = np.arctan2(y, x)

    folds = rng.integers(7, 12)
    fold_depth = rng.uniform(0.05, 0.08)
    phase1, phase2 = rng.uniform(0, 2 * np.pi, size=2)
    wm_edge = (
        WM_RADIUS
        + fold_depth * np.sin(folds * phi + phase1)
        + 0.025 * np.sin((folds // 2 + 1) * phi + phase2)
    )

    labels = np.full(grid.shape, LABEL_BACKGROUND, dtype=np.uint8)
    labels[rho <= 1.0] = LABEL_CSF
    labels[rho <= BRAIN_RADIUS] = LABEL_GM
    labels[rho <= wm_edge] = LABEL_WM

    # Putamen-like nuclei, lateral to the ventricles.
    put_x = 0.30 * ax * (1.0 + rng.uniform(-0.08, 0.08))
    put_y = 0.04 * ay + rng.uniform(-0.03, 0.03)
    put_r = (0.17 * ay, 0.09 * ax)
    for side in (-1.0, 1.0):
        labels[_ellipse(y, x, put_y, side * put_x, *put_r)] = LABEL_PUTAMEN

    # Ventricles.
    vent_x = 0.09 * ax
    vent_r = (0.22 * ay * (1.0 + rng.uniform(-0.15, 0.15)), 0.055 * ax)
    for side in (-1.0, 1.0):
        labels[_ellipse(y, x, -0.05 * ay, side * vent_x, *vent_r)] = LABEL_CSF

    return labels


def _bias_field(seed: int, grid: GridSpec) -> np.ndarray:
    """Smooth multiplicative field 1 + a*f with f in [-1, 1]."""
    rng = np.random.default_rng([seed, 1])
    field = ndimage.gaussian_filter(
        rng.standard_normal(grid.shape), sigma=max(grid.nx, grid.ny) / 6.0, mode="wrap"
    )
    peak = np.max(np.abs(field))
    if peak > 0:
        field = field / peak
    return 1.0 + BIAS_FIELD_AMPLITUDE * field


def phantom_from_labels(
    labels: np.ndarray, contrast: ContrastSpec, grid: GridSpec, mr_seed: int = 0
) -> PhantomSample:
    """
    Build an activity/MR pair from a label map.

    This is also the loader hook for external segmentations saved as DRLB files.

    Args:
        labels: uint8 label map shaped like the grid
        contrast: Tracer uptake per tissue
        grid: Image grid
        mr_seed: Seed of the MR bias field

    Returns:
        PhantomSample with piecewise-constant activity and an MR prior in [0, 1]
    """
    masks = TissueMasks.from_labels(labels)

    activity = (
        contrast.gm_level * masks.gm
        + contrast.wm_level * masks.wm
        + contrast.csf_level * masks.csf
    ).astype(np.float64)

    mr = np.zeros(grid.shape)
    for label, level in MR_LEVELS.items():
        mr[labels == label] = level
    mr *= _bias_field(mr_seed, grid)
    peak = mr.max()
    if peak > 0:
        mr = np.clip(mr / peak, 0.0, 1.0)

    return PhantomSample(
        activity=Image(grid, activity), mr_prior=Image(grid, mr), masks=masks
    )


def make_phantom(seed: int, contrast: ContrastSpec, grid: GridSpec) -> PhantomSample:
    """Procedural phantom; the MR prior depends on the seed only, never on contrast."""
    labels = make_labels(seed, grid)
    sample = phantom_from_labels(labels, contrast, grid, mr_seed=seed)
    logger.debug(
        f"Phantom seed={seed}: {int(sample.masks.gm.sum())} GM, "
        f"{int(sample.masks.wm.sum())} WM voxels"
    )
    return sample
