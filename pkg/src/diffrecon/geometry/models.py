"""Geometry value types: image grid, projection layout, images and sinograms."""

from dataclasses import dataclass

import numpy as np
from pydantic import Field
from pydantic.dataclasses import dataclass as pydantic_dataclass

from diffrecon.errors import ConfigurationError


@pydantic_dataclass(frozen=True)
class GridSpec:
    """Square-voxel image grid centred on the scanner axis."""

    nx: int = Field(default=64, ge=8)
    ny: int = Field(default=64, ge=8)
    voxel_size: float = Field(default=2.0, gt=0)  # mm

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def n_voxels(self) -> int:
        return self.nx * self.ny


@pydantic_dataclass(frozen=True)
class ProjSpec:
    """Parallel-beam sinogram layout; angles uniformly span [0, pi)."""

    n_angles: int = Field(default=60, ge=1)
    n_bins: int = Field(default=95, ge=1)
    bin_width: float = Field(default=2.0, gt=0)  # mm

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_angles, self.n_bins)

    @property
    def n_bins_total(self) -> int:
        return self.n_angles * self.n_bins

    def angles(self) -> np.ndarray:
        """View angles at (k + 0.5) * pi / n_angles, away from the grid axes."""
        return (np.arange(self.n_angles) + 0.5) * np.pi / self.n_angles

    def radial_offsets(self) -> np.ndarray:
        """Signed distance of each bin centre from the rotation axis."""
        return (np.arange(self.n_bins) - (self.n_bins - 1) / 2.0) * self.bin_width


@dataclass
class Image:
    """Activity (or signed diffusion-state) image with values shaped (ny, nx)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ConfigurationError(
                f"Image values have shape {self.values.shape}, grid expects {self.grid.shape}"
            )

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Image":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def full(cls, grid: GridSpec, value: float) -> "Image":
        return cls(grid, np.full(grid.shape, float(value)))

    def like(self, values: np.ndarray) -> "Image":
        """New image on the same grid."""
        return Image(self.grid, values)

    def scaled(self, factor: float) -> "Image":
        return Image(self.grid, self.values * factor)


@dataclass
class Sinogram:
    """Projection data (expected counts, measured counts, or background)."""

    proj: ProjSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.proj.shape:
            raise ConfigurationError(
                f"Sinogram values have shape {self.values.shape}, layout expects {self.proj.shape}"
            )

    @classmethod
    def zeros(cls, proj: ProjSpec) -> "Sinogram":
        return cls(proj, np.zeros(proj.shape))

    @classmethod
    def full(cls, proj: ProjSpec, value: float) -> "Sinogram":
        return cls(proj, np.full(proj.shape, float(value)))

    def like(self, values: np.ndarray) -> "Sinogram":
        return Sinogram(self.proj, values)

    @property
    def total(self) -> float:
        return float(self.values.sum())
