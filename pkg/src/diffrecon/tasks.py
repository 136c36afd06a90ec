"""
Picklable units of work and the on-disk bundles they read.

Workers receive paths and the raw config text, never live objects, so the same
functions run in-process or in a process pool.
"""

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from diffrecon.classical.mlem import mlem_iterates
from diffrecon.classical.rdp import mapem_iterates
from diffrecon.config import ExperimentConfig, parse_config
from diffrecon.errors import ConfigurationError, DiffreconError, FormatError
from diffrecon.geometry.models import Image, Sinogram
from diffrecon.io.formats import (
    encode_adapters,
    encode_image,
    encode_labels,
    load_checkpoint,
    load_image,
    load_labels,
    load_sinogram,
)
from diffrecon.io.manifest import read_manifest
from diffrecon.phantom.models import PhantomSample, TissueMasks
from diffrecon.recon.ddip import ddip_reconstruct
from diffrecon.recon.dps import ddim_reference, dps_reconstruct
from diffrecon.recon.models import ReconProblem
from diffrecon.score.network import NetPredictor


logger = logging.getLogger(__name__)

THREADS_ENV = "DIFFRECON_THREADS"
METHODS = ("mlem", "mapem", "dps", "ddip", "ddim-sample")
NETWORK_METHODS = ("dps", "ddip", "ddim-sample")


def configure_threads() -> int | None:
    """Cap torch intra-op threads from DIFFRECON_THREADS (1 is the bit-reproducible mode)."""
    value = os.environ.get(THREADS_ENV)
    if not value:
        return None
    try:
        threads = int(value)
    except ValueError as e:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {value!r}") from e
    if threads < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be >= 1, got {threads}")
    torch.set_num_threads(threads)
    return threads


# =============================================================================
# Bundles on disk
# =============================================================================


def realization_name(k: int) -> str:
    return f"realization_{k:02d}.drsn"


def bundle_files(sample: PhantomSample) -> dict[str, bytes]:
    """File name to encoded bytes for a phantom bundle directory."""
    return {
        "activity.drim": encode_image(sample.activity),
        "mr.drim": encode_image(sample.mr_prior),
        "labels.drlb": encode_labels(sample.masks.labels(), sample.activity.grid),
    }


def read_phantom_bundle(directory: Path) -> PhantomSample:
    if not (directory / "activity.drim").exists():
        raise FormatError(f"No phantom bundle in {directory}")
    labels, _ = load_labels(directory / "labels.drlb")
    return PhantomSample(
        activity=load_image(directory / "activity.drim"),
        mr_prior=load_image(directory / "mr.drim"),
        masks=TissueMasks.from_labels(labels),
    )


def read_training_set(phantom_dir: Path) -> list[PhantomSample]:
    train_dir = phantom_dir / "train"
    if not train_dir.is_dir():
        raise FormatError(f"No training set under {phantom_dir}")
    return [read_phantom_bundle(d) for d in sorted(train_dir.iterdir()) if d.is_dir()]


@dataclass
class SimulatedData:
    """A simulation directory: truth, prior, background and noisy realizations."""

    directory: Path
    truth: Image
    mr: Image
    masks: TissueMasks
    background: Sinogram
    count_scale: float
    n_realizations: int

    def counts(self, k: int) -> Sinogram:
        if not 0 <= k < self.n_realizations:
            raise ConfigurationError(f"Realization {k} outside [0, {self.n_realizations})")
        return load_sinogram(self.directory / realization_name(k))

    def problem(self, k: int) -> ReconProblem:
        return ReconProblem(self.counts(k), self.background, self.mr, self.count_scale)


def read_simulation(directory: Path) -> SimulatedData:
    manifest = read_manifest(directory)
    if manifest.count_scale is None:
        raise FormatError(f"{directory} is not a simulation directory (no count scale)")
    phantom = read_phantom_bundle(directory)
    return SimulatedData(
        directory=directory,
        truth=phantom.activity,
        mr=phantom.mr_prior,
        masks=phantom.masks,
        background=load_sinogram(directory / "background.drsn"),
        count_scale=manifest.count_scale,
        n_realizations=int(manifest.settings["n_realizations"]),
    )


# =============================================================================
# Work units
# =============================================================================


@dataclass(frozen=True)
class ReconTask:
    """One method on one realization; `markers` asks MLEM/MAPEM for intermediate iterates."""

    method: str
    data_dir: str
    realization: int
    config_text: str
    seed: int
    checkpoint: str | None = None
    overrides: dict = field(default_factory=dict)
    markers: tuple[int, ...] = ()


@dataclass
class ReconOutput:
    """Activity-space images keyed by marker (None for the final image)."""

    realization: int
    images: dict[int | None, np.ndarray] = field(default_factory=dict)
    diagnostics: list[dict] = field(default_factory=list)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    adapters: bytes | None = None
    error: str | None = None


def _classical(task: ReconTask, config: ExperimentConfig, problem: ReconProblem) -> ReconOutput:
    if task.method == "mlem":
        section = dataclasses.replace(config.recon.mlem, **task.overrides)
        n_iter = max((section.n_iter, *task.markers))
        states = mlem_iterates(problem.y, problem.b, n_iter, grid=problem.grid)
    else:
        section = dataclasses.replace(config.recon.mapem, **task.overrides)
        n_iter = max((section.n_iter, *task.markers))
        states = mapem_iterates(
            problem.y, problem.b, n_iter, section.gamma, section.weight, grid=problem.grid
        )

    out = ReconOutput(task.realization)
    for state in states:
        out.diagnostics.append(
            {
                "iteration": state.iteration,
                "log_likelihood": problem.log_likelihood(state.x.values),
                "clamped": state.clamped,
            }
        )
        if state.iteration in task.markers:
            out.images[state.iteration] = problem.to_network(state.x.values)
        if state.iteration == section.n_iter:
            out.images[None] = problem.to_network(state.x.values)
    return out


def reconstruct(task: ReconTask) -> ReconOutput:
    """Run one reconstruction from files; divergence comes back as an error with diagnostics."""
    configure_threads()
    if task.method not in METHODS:
        raise ConfigurationError(f"Unknown method '{task.method}'")
    config = parse_config(task.config_text)
    data = read_simulation(Path(task.data_dir))
    problem = data.problem(task.realization)
    if task.method in ("mlem", "mapem"):
        return _classical(task, config, problem)

    if task.checkpoint is None:
        raise ConfigurationError(f"Method '{task.method}' needs a score-model checkpoint")
    net, base_hash = load_checkpoint(Path(task.checkpoint))
    sched = config.schedule.schedule()
    rng = np.random.default_rng(task.seed)
    out = ReconOutput(task.realization)
    try:
        if task.method == "ddip":
            settings = dataclasses.replace(config.recon.ddip, **task.overrides)
            result = ddip_reconstruct(problem, net, settings, sched, rng)
        elif task.method == "dps":
            settings = dataclasses.replace(config.recon.dps, **task.overrides)
            result = dps_reconstruct(problem, NetPredictor(net), settings, sched, rng)
        else:
            result = ddim_reference(
                problem,
                NetPredictor(net),
                sched,
                rng,
                eta=task.overrides.get("eta", 0.0),
                unconditional=task.overrides.get("unconditional", False),
            )
    except DiffreconError as e:
        out.error = str(e)
        out.diagnostics = e.diagnostics
        return out

    out.images[None] = problem.to_network(result.image.values)
    out.diagnostics = result.diagnostics.rows()
    out.snapshots = {
        t: problem.to_network(snap) for t, snap in result.diagnostics.snapshots.items()
    }
    if result.adapters is not None:
        out.adapters = encode_adapters(result.adapters, base_hash)
    return out


def settings_record(task: ReconTask) -> dict:
    """Method settings as they were applied, for the run manifest."""
    config = parse_config(task.config_text)
    section = {
        "mlem": config.recon.mlem,
        "mapem": config.recon.mapem,
        "dps": config.recon.dps,
        "ddip": config.recon.ddip,
        "ddim-sample": None,
    }[task.method]
    if section is None:
        return dict(task.overrides)
    return dataclasses.asdict(dataclasses.replace(section, **task.overrides))
