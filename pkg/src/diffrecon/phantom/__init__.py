"""Synthetic brain phantoms for score-model training and out-of-distribution tests."""

from diffrecon.phantom.augment import (
    apply_augmentation,
    augment,
    draw_augmentation,
    make_training_set,
)
from diffrecon.phantom.generator import make_labels, make_phantom, phantom_from_labels
from diffrecon.phantom.models import (
    AMYLOID_NEGATIVE_CONTRAST,
    FDG_CONTRAST,
    AugmentParams,
    ContrastSpec,
    PhantomSample,
    TissueMasks,
)

__all__ = [
    "AMYLOID_NEGATIVE_CONTRAST",
    "FDG_CONTRAST",
    "AugmentParams",
    "ContrastSpec",
    "PhantomSample",
    "TissueMasks",
    "apply_augmentation",
    "augment",
    "draw_augmentation",
    "make_labels",
    "make_phantom",
    "make_training_set",
    "phantom_from_labels",
]
