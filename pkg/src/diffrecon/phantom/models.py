"""Phantom value types: tissue masks, contrast levels, and paired samples."""

from dataclasses import dataclass

import numpy as np
from pydantic import Field, ValidationInfo, field_validator
from pydantic.dataclasses import dataclass as pydantic_dataclass

from diffrecon.errors import ConfigurationError
from diffrecon.geometry.models import Image


# Label map codes (DRLB files). Putamen voxels are grey matter.
LABEL_BACKGROUND = 0
LABEL_CSF = 1
LABEL_GM = 2
LABEL_WM = 3
LABEL_PUTAMEN = 4


@pydantic_dataclass(frozen=True)
class ContrastSpec:
    """Tracer uptake per tissue class."""

    gm_level: float = Field(default=1.0, ge=0)
    wm_level: float = Field(default=0.25, ge=0)
    csf_level: float = Field(default=0.05, ge=0)

    @field_validator("wm_level")
    @classmethod
    def _distinct_from_gm(cls, value: float, info: ValidationInfo) -> float:
        if value == info.data.get("gm_level"):
            raise ValueError("gm_level and wm_level must differ")
        return value


FDG_CONTRAST = ContrastSpec(gm_level=1.0, wm_level=0.25, csf_level=0.05)
AMYLOID_NEGATIVE_CONTRAST = ContrastSpec(gm_level=1.0, wm_level=3.3, csf_level=0.05)


@dataclass
class TissueMasks:
    """Disjoint tissue partition of the grid, plus a putamen-like ROI inside grey matter."""

    gm: np.ndarray
    wm: np.ndarray
    csf: np.ndarray
    background: np.ndarray
    putamen: np.ndarray

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> "TissueMasks":
        labels = np.asarray(labels)
        known = np.isin(labels, [LABEL_BACKGROUND, LABEL_CSF, LABEL_GM, LABEL_WM, LABEL_PUTAMEN])
        if not np.all(known):
            raise ConfigurationError(f"Unknown label values {np.unique(labels[~known])}")
        return cls(
            gm=(labels == LABEL_GM) | (labels == LABEL_PUTAMEN),
            wm=labels == LABEL_WM,
            csf=labels == LABEL_CSF,
            background=labels == LABEL_BACKGROUND,
            putamen=labels == LABEL_PUTAMEN,
        )

    def labels(self) -> np.ndarray:
        out = np.full(self.gm.shape, LABEL_BACKGROUND, dtype=np.uint8)
        out[self.csf] = LABEL_CSF
        out[self.gm] = LABEL_GM
        out[self.putamen] = LABEL_PUTAMEN
        out[self.wm] = LABEL_WM
        return out

    def is_partition(self) -> bool:
        """True when the four tissue masks are disjoint and cover the grid."""
        stack = np.stack([self.gm, self.wm, self.csf, self.background]).astype(np.int8)
        return bool(np.all(stack.sum(axis=0) == 1))

    def roi(self, name: str) -> np.ndarray:
        return getattr(self, name)


@dataclass
class PhantomSample:
    """Activity image paired with its anatomical (MR-like) prior."""

    activity: Image
    mr_prior: Image
    masks: TissueMasks


@dataclass(frozen=True)
class AugmentParams:
    """One draw of the augmentation transform."""

    gm_scale: float = 1.0
    wm_scale: float = 1.0
    spatial_scale: float = 1.0
    rotation_deg: float = 0.0
    shear: float = 0.0
