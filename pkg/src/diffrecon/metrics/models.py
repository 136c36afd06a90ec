"""ROI sets and aggregate metric records."""

from dataclasses import dataclass, field

import numpy as np

from diffrecon.errors import DomainError
from diffrecon.geometry.models import Image
from diffrecon.phantom.models import TissueMasks


ROI_NAMES = ("gm", "wm", "putamen", "background")


def as_values(x: Image | np.ndarray) -> np.ndarray:
    return x.values if isinstance(x, Image) else np.asarray(x, dtype=np.float64)


@dataclass
class RoiSet:
    """Named boolean masks; a mask must be non-empty when a metric asks for it."""

    masks: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_tissue(cls, tissue: TissueMasks) -> "RoiSet":
        return cls({name: tissue.roi(name).astype(bool) for name in ROI_NAMES})

    def get(self, name: str) -> np.ndarray:
        mask = self.masks.get(name)
        if mask is None or not mask.any():
            raise DomainError(f"ROI '{name}' is missing or empty")
        return mask

    def mean(self, x: Image | np.ndarray, name: str) -> float:
        return float(as_values(x)[self.get(name)].mean())


@dataclass
class EnsembleStats:
    """Voxelwise mean, bias (mean - truth) and population std over n realizations."""

    mean: Image
    bias: Image
    std: Image
    n: int


@dataclass(frozen=True)
class CurvePoint:
    """One marker of a %contrast-CV tradeoff curve, averaged over realizations."""

    sweep_value: float
    percent_contrast: float
    cv: float
