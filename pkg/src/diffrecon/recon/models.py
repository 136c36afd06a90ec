"""Reconstruction settings, the shared problem bundle, and per-step diagnostics."""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
from pydantic import ConfigDict, Field
from pydantic.dataclasses import dataclass as pydantic_dataclass

from diffrecon.errors import ConfigurationError
from diffrecon.geometry.likelihood import log_likelihood_from_mean
from diffrecon.geometry.models import GridSpec, Image, Sinogram
from diffrecon.geometry.projector import Projector, get_projector


# =============================================================================
# Configuration
# =============================================================================


@pydantic_dataclass(frozen=True, config=ConfigDict(extra="forbid"))
class DdipConfig:
    """
    Settings of the DDIP reconstruction loop.

    outer_iters, em_iters and finetune_steps are the N, M1 and M2 counts of the
    algorithm. lora_rank = 0 fine-tunes every weight of a per-subject copy.
    """

    outer_iters: int = Field(default=2, ge=1)
    em_iters: int = Field(default=5, ge=1)
    finetune_steps: int = Field(default=1, ge=1)
    t_start: int = Field(default=200, ge=1)
    beta: float = Field(default=0.01, gt=0)
    eta: float = Field(default=0.0, ge=0, le=1)
    lora_rank: int = Field(default=4, ge=0)
    mlem_init_iters: int = Field(default=20, ge=1)
    learning_rate: float = Field(default=1e-3, ge=0)
    weight_decay: float = Field(default=0.0, ge=0)
    unconditional: bool = False
    snapshot_every: int = Field(default=0, ge=0)


@pydantic_dataclass(frozen=True, config=ConfigDict(extra="forbid"))
class DpsConfig:
    """Settings of the DPS baseline. t_start = None starts from pure noise at T."""

    lambda_step: float = Field(default=1.0, ge=0)
    eta: float = Field(default=1.0, ge=0, le=1)
    t_start: int | None = Field(default=None, ge=1)
    mlem_init_iters: int = Field(default=20, ge=1)
    exact_jacobian: bool = False
    unconditional: bool = False
    snapshot_every: int = Field(default=0, ge=0)


# =============================================================================
# Problem
# =============================================================================


@dataclass
class ReconProblem:
    """
    Measured data and everything a reconstruction needs beside the score model.

    count_scale maps the network's normalized activity space to count space:
    count image = activity * count_scale.
    """

    y: Sinogram
    b: Sinogram
    g: Image
    count_scale: float
    projector: Projector | None = None

    def __post_init__(self):
        if self.count_scale <= 0:
            raise ConfigurationError(f"count_scale must be positive, got {self.count_scale}")
        if self.b.proj != self.y.proj:
            raise ConfigurationError("y and b use different projection layouts")
        if self.projector is None:
            self.projector = get_projector(self.g.grid, self.y.proj)
        elif self.projector.grid != self.g.grid or self.projector.proj != self.y.proj:
            raise ConfigurationError("Projector geometry does not match the data")

    @property
    def grid(self) -> GridSpec:
        return self.g.grid

    @cached_property
    def s(self) -> np.ndarray:
        return self.projector.sensitivity_array()

    @property
    def sensitivity(self) -> Image:
        return Image(self.grid, self.s)

    def prior(self, unconditional: bool = False) -> np.ndarray:
        """Conditioning image; zeros for the unconditional ablation."""
        return np.zeros(self.grid.shape) if unconditional else self.g.values

    def to_network(self, counts: np.ndarray) -> np.ndarray:
        return counts / self.count_scale

    def to_counts(self, activity: np.ndarray) -> np.ndarray:
        return activity * self.count_scale

    def log_likelihood(self, x_counts: np.ndarray, skip_zero_mean: bool = False) -> float:
        """Poisson log-likelihood of count-space x; skip_zero_mean drops bins with ybar <= 0."""
        y = self.y.values
        ybar = self.projector.forward_array(x_counts) + self.b.values
        if skip_zero_mean:
            kept = ybar > 0
            y, ybar = y[kept], ybar[kept]
        return log_likelihood_from_mean(y, ybar)


# =============================================================================
# Diagnostics
# =============================================================================


@dataclass
class StepRecord:
    """One row of the diagnostics CSV."""

    t: int
    round: int
    log_likelihood: float
    hqs_objective: float = float("nan")
    finetune_loss: float = float("nan")
    excluded_bins: int = 0


@dataclass
class ReconDiagnostics:
    records: list[StepRecord] = field(default_factory=list)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    info: dict[str, Any] = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [vars(r).copy() for r in self.records]

    @property
    def excluded_bins(self) -> int:
        return sum(r.excluded_bins for r in self.records)


@dataclass
class DdipRunState:
    """Loop state: t decreases strictly from T' to 1; adapters persist across t."""

    t: int
    x_t: np.ndarray
    adapters: Any
    diagnostics: ReconDiagnostics


@dataclass
class ReconResult:
    image: Image
    diagnostics: ReconDiagnostics
    adapters: Any = None
