"""
Experiment configuration: one TOML document with a section per concern.

Every key has a desk-scale default, so an empty file is a valid configuration.
Unknown keys are rejected.
"""

import logging

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

from pydantic import ConfigDict, Field, TypeAdapter, ValidationError
from pydantic.dataclasses import dataclass as pydantic_dataclass

from diffrecon.diffusion.schedule import NoiseSchedule, make_schedule
from diffrecon.errors import ConfigurationError
from diffrecon.geometry.models import GridSpec, ProjSpec
from diffrecon.metrics.report import scaled_tprimes
from diffrecon.phantom.models import AMYLOID_NEGATIVE_CONTRAST, FDG_CONTRAST, ContrastSpec
from diffrecon.recon.models import DdipConfig, DpsConfig
from diffrecon.score.models import TrainConfig


logger = logging.getLogger(__name__)

STRICT = ConfigDict(extra="forbid")

DESK_T = 500
DESK_T_START = 100
# 0.02T..0.2T and T, plus the 0.05T and 0.25T points the interior-optimum check reads
TPRIME_SWEEP_FRACTIONS = (0.02, 0.05, 0.1, 0.2, 0.25, 1.0)

CONTRASTS: dict[str, ContrastSpec] = {
    "fdg": FDG_CONTRAST,
    "amyloid-negative": AMYLOID_NEGATIVE_CONTRAST,
}
ContrastName = Literal["fdg", "amyloid-negative"]


@pydantic_dataclass(frozen=True, config=STRICT)
class GeometrySection:
    nx: int = Field(default=64, ge=8)
    ny: int = Field(default=64, ge=8)
    voxel_size: float = Field(default=2.0, gt=0)
    n_angles: int = Field(default=60, ge=1)
    n_bins: int = Field(default=95, ge=1)
    bin_width: float = Field(default=2.0, gt=0)

    def grid(self) -> GridSpec:
        return GridSpec(nx=self.nx, ny=self.ny, voxel_size=self.voxel_size)

    def proj(self) -> ProjSpec:
        return ProjSpec(n_angles=self.n_angles, n_bins=self.n_bins, bin_width=self.bin_width)


@pydantic_dataclass(frozen=True, config=STRICT)
class PhantomSection:
    """Training set of n_base phantoms expanded `expansion`-fold, plus one test phantom."""

    n_base: int = Field(default=8, ge=1)
    expansion: int = Field(default=25, ge=1)
    train_contrast: ContrastName = "fdg"
    test_contrast: ContrastName = "amyloid-negative"
    labels_file: str | None = None


@pydantic_dataclass(frozen=True, config=STRICT)
class ScheduleSection:
    T: int = Field(default=DESK_T, ge=1)
    beta_start: float = Field(default=1e-4, gt=0)
    beta_end: float = Field(default=0.02, gt=0, lt=1)

    def schedule(self) -> NoiseSchedule:
        return make_schedule(self.T, self.beta_start, self.beta_end)


@pydantic_dataclass(frozen=True, config=STRICT)
class MlemSection:
    n_iter: int = Field(default=100, ge=1)


@pydantic_dataclass(frozen=True, config=STRICT)
class MapemSection:
    n_iter: int = Field(default=100, ge=1)
    gamma: float = Field(default=2.0, ge=0)
    weight: float = Field(default=10.0, ge=0)


@pydantic_dataclass(frozen=True, config=STRICT)
class ReconSection:
    mlem: MlemSection = Field(default_factory=MlemSection)
    mapem: MapemSection = Field(default_factory=MapemSection)
    dps: DpsConfig = Field(default_factory=DpsConfig)
    ddip: DdipConfig = Field(default_factory=lambda: DdipConfig(t_start=DESK_T_START))


@pydantic_dataclass(frozen=True, config=STRICT)
class SimulateSection:
    count_target: float = Field(default=1e6, gt=0)
    n_realizations: int = Field(default=10, ge=1)
    background_fraction: float = Field(default=0.0, ge=0)


@pydantic_dataclass(frozen=True, config=STRICT)
class MetricsSection:
    """Sweep grids; unset T' and lambda grids follow the tradeoff marker protocol."""

    realizations: int = Field(default=5, ge=1)
    tprime_values: list[int] | None = None
    beta_values: list[float] = Field(default_factory=lambda: [1e-4, 1e-3, 1e-2, 1e-1, 1.0])
    lora_ranks: list[int] = Field(default_factory=lambda: [0, 2, 4, 8, 12, 16])
    lambda_values: list[float] | None = None


@pydantic_dataclass(frozen=True, config=STRICT)
class OutputSection:
    png: bool = True
    plots: bool = True


@pydantic_dataclass(frozen=True, config=STRICT)
class ExperimentConfig:
    seed: int = Field(default=0, ge=0)
    geometry: GeometrySection = Field(default_factory=GeometrySection)
    phantom: PhantomSection = Field(default_factory=PhantomSection)
    schedule: ScheduleSection = Field(default_factory=ScheduleSection)
    train: TrainConfig = Field(default_factory=TrainConfig)
    recon: ReconSection = Field(default_factory=ReconSection)
    simulate: SimulateSection = Field(default_factory=SimulateSection)
    metrics: MetricsSection = Field(default_factory=MetricsSection)
    output: OutputSection = Field(default_factory=OutputSection)

    def tprime_sweep(self) -> list[int]:
        """T' values for the tprime-beta recipe, as fractions of T unless set explicitly."""
        if self.metrics.tprime_values is not None:
            return list(self.metrics.tprime_values)
        return scaled_tprimes(TPRIME_SWEEP_FRACTIONS, self.schedule.T)


@dataclass
class LoadedConfig:
    config: ExperimentConfig
    text: str
    path: Path | None = None


_ADAPTER = TypeAdapter(ExperimentConfig)


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(p) for p in item["loc"])
        parts.append(f"{where}: {item['msg']}")
    return "; ".join(parts)


def parse_config(text: str) -> ExperimentConfig:
    """
    Parse and validate a TOML configuration.

    Raises:
        ConfigurationError: On TOML syntax errors (with line and column), unknown
            keys, or out-of-range values
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"Config parse error: {e}") from e
    try:
        return _ADAPTER.validate_python(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid config: {_describe(e)}") from e


def load_config(path: Path | None) -> LoadedConfig:
    """Read a config file; None gives the defaults with an empty echo text."""
    if path is None:
        return LoadedConfig(ExperimentConfig(), "")
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    config = parse_config(text)
    logger.debug(f"Loaded config from {path}")
    return LoadedConfig(config, text, path)
