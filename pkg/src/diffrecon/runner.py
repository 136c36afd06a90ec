"""Experiment commands as async generators of progress events, separated from UI concerns."""

import asyncio
import dataclasses
import logging
import time
from collections.abc import AsyncGenerator, Iterable, Sequence
from contextlib import aclosing
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Literal, NamedTuple

import aiofiles

from diffrecon.config import CONTRASTS, ExperimentConfig, LoadedConfig
from diffrecon.errors import ConfigurationError, DiffreconError, DivergenceError, FormatError
from diffrecon.geometry.likelihood import simulate_counts, uniform_background
from diffrecon.geometry.models import GridSpec, Image
from diffrecon.geometry.projector import get_projector
from diffrecon.io.export import (
    csv_text,
    plot_box,
    plot_lines,
    plot_tradeoff,
    write_png,
)
from diffrecon.io.formats import (
    content_hash,
    encode_checkpoint,
    encode_image,
    encode_sinogram,
    load_image,
    load_labels,
)
from diffrecon.io.manifest import MANIFEST_NAME, RunManifest, manifest_json, read_manifest
from diffrecon.metrics.ensemble import ensemble_stats, marker_protocol
from diffrecon.metrics.models import RoiSet
from diffrecon.metrics.report import (
    CheckResult,
    RunMetrics,
    acceptance_checks,
    curve_rows,
    evaluate_run,
    psnr_grid_rows,
    rank_rows,
    tradeoff_curves,
)
from diffrecon.phantom.augment import make_training_set
from diffrecon.phantom.generator import make_phantom, phantom_from_labels
from diffrecon.phantom.models import PhantomSample
from diffrecon.score.training import train_score
from diffrecon.seeding import (
    RECONSTRUCTION_STREAMS,
    SIMULATION_STREAMS,
    TEST_PHANTOM_STREAM,
    TRAINING_SET_STREAM,
    TRAINING_STREAM,
    stream_seed,
)
from diffrecon.tasks import (
    NETWORK_METHODS,
    ReconOutput,
    ReconTask,
    bundle_files,
    configure_threads,
    read_phantom_bundle,
    read_simulation,
    read_training_set,
    realization_name,
    reconstruct,
    settings_record,
)


logger = logging.getLogger(__name__)

RECIPES = ("tprime-beta", "lora-rank", "tradeoff", "comparison")


class StageState(NamedTuple):
    """State of a single command stage."""

    status: Literal["pending", "active", "complete", "error"]
    progress: float
    detail: str


@dataclass
class RunProgress:
    """Progress update for a specific stage."""

    stage: str
    state: StageState


@dataclass
class RunComplete:
    """Command completed; `outputs` lists the directories or files it wrote."""

    summary_text: str
    outputs: list[Path] = field(default_factory=list)
    checks: list[CheckResult] = field(default_factory=list)


@dataclass
class RunError:
    """Command failed; files written before the failure are left in place."""

    error: str
    stage: str


RunEvent = RunProgress | RunComplete | RunError


@dataclass(frozen=True)
class RunSpec:
    """
    One run directory to produce: a method with setting overrides.

    A spec with `markers` runs MLEM/MAPEM once and yields one run directory per
    marked iteration.
    """

    name: str
    method: str
    recipe: str | None = None
    sweep_key: str | None = None
    sweep_value: float | None = None
    overrides: dict = field(default_factory=dict)
    markers: tuple[int, ...] = ()

    def targets(self) -> dict[int | None, "RunSpec"]:
        if not self.markers:
            return {None: self}
        return {
            m: dataclasses.replace(
                self,
                name=f"{self.name}_it{m:03d}",
                sweep_key="n_iter",
                sweep_value=m,
                overrides={**self.overrides, "n_iter": m},
                markers=(),
            )
            for m in self.markers
        }


async def _write(path: Path, data: bytes | str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    async with aiofiles.open(path, mode) as f:
        await f.write(data)


async def _read_bytes(path: Path) -> bytes:
    async with aiofiles.open(path, "rb") as f:
        return await f.read()


def _geometry_record(grid: GridSpec, config: ExperimentConfig) -> dict:
    return {
        "grid": dataclasses.asdict(grid),
        "proj": dataclasses.asdict(config.geometry.proj()),
    }


def _executor(jobs: int) -> Executor:
    if jobs > 1:
        return ProcessPoolExecutor(max_workers=jobs, initializer=configure_threads)
    return ThreadPoolExecutor(max_workers=1)


async def _execute(
    fn, items: Sequence[tuple[object, object]], jobs: int
) -> AsyncGenerator[tuple[object, object], None]:
    """Run fn(arg) for every (key, arg), yielding (key, result) in completion order."""
    loop = asyncio.get_running_loop()
    executor = _executor(jobs)
    try:
        pending = {loop.run_in_executor(executor, fn, arg): key for key, arg in items}
        while pending:
            done, _ = await asyncio.wait(pending, return_when=asyncio.FIRST_COMPLETED)
            for future in done:
                key = pending.pop(future)
                yield key, future.result()
    finally:
        executor.shutdown(wait=True, cancel_futures=True)


# =============================================================================
# phantom
# =============================================================================


async def _write_bundle(directory: Path, sample: PhantomSample) -> None:
    for name, data in bundle_files(sample).items():
        await _write(directory / name, data)


def _test_phantom(config: ExperimentConfig, seed: int) -> PhantomSample:
    contrast = CONTRASTS[config.phantom.test_contrast]
    test_seed = stream_seed(seed, TEST_PHANTOM_STREAM)
    if config.phantom.labels_file is not None:
        labels, grid = load_labels(Path(config.phantom.labels_file))
        return phantom_from_labels(labels, contrast, grid, mr_seed=test_seed)
    return make_phantom(test_seed, contrast, config.geometry.grid())


async def run_phantom(
    loaded: LoadedConfig, out_dir: Path, seed: int
) -> AsyncGenerator[RunEvent, None]:
    """
    Write the training set (train/sample_XXXX) and the test phantom (test/).

    Args:
        loaded: Parsed configuration and its text
        out_dir: Output directory
        seed: Master seed
    """
    config = loaded.config
    try:
        yield RunProgress("training set", StageState("active", 0.0, "Generating phantoms..."))
        training = make_training_set(
            config.phantom.n_base,
            config.phantom.expansion,
            CONTRASTS[config.phantom.train_contrast],
            stream_seed(seed, TRAINING_SET_STREAM),
            config.geometry.grid(),
        )
        for i, sample in enumerate(training):
            await _write_bundle(out_dir / "train" / f"sample_{i:04d}", sample)
            if (i + 1) % 25 == 0 or i == len(training) - 1:
                progress = (i + 1) / len(training) * 100
                yield RunProgress(
                    "training set",
                    StageState("active", progress, f"Wrote {i + 1}/{len(training)} samples"),
                )
        yield RunProgress(
            "training set", StageState("complete", 100.0, f"✓ {len(training)} samples")
        )

        test = _test_phantom(config, seed)
        await _write_bundle(out_dir / "test", test)
        yield RunProgress("test phantom", StageState("complete", 100.0, "✓ Test phantom"))

        manifest = RunManifest(
            command="phantom",
            config_text=loaded.text,
            master_seed=seed,
            seeds={
                "training_set": stream_seed(seed, TRAINING_SET_STREAM),
                "test_phantom": stream_seed(seed, TEST_PHANTOM_STREAM),
            },
            geometry=_geometry_record(test.activity.grid, config),
            settings=dataclasses.asdict(config.phantom),
            outputs=["train", "test"],
        )
        await _write(out_dir / MANIFEST_NAME, manifest_json(manifest))
        yield RunComplete(
            f"Training set: {len(training)} {config.phantom.train_contrast} phantoms\n"
            f"Test phantom: {config.phantom.test_contrast}\n"
            f"Output: {out_dir}",
            outputs=[out_dir],
        )
    except DiffreconError as e:
        yield RunError(str(e), "phantom")
    except Exception as e:
        logger.error(f"Phantom generation failed: {e}", exc_info=True)
        yield RunError(str(e), "phantom")


# =============================================================================
# simulate
# =============================================================================


async def run_simulate(
    loaded: LoadedConfig, phantom_dir: Path, out_dir: Path, seed: int
) -> AsyncGenerator[RunEvent, None]:
    """Forward-project the test phantom and draw Poisson realizations at the count target."""
    config = loaded.config
    settings = config.simulate
    try:
        test = read_phantom_bundle(phantom_dir / "test")
        projector = get_projector(test.activity.grid, config.geometry.proj())
        ybar = projector.forward(test.activity)
        background = uniform_background(
            projector.proj, settings.background_fraction, settings.count_target
        )

        seeds, scale = {}, None
        for k in range(settings.n_realizations):
            seeds[realization_name(k)] = stream_seed(seed, SIMULATION_STREAMS + k)
            counts, scale = simulate_counts(
                ybar, settings.count_target, seeds[realization_name(k)], background
            )
            await _write(out_dir / realization_name(k), encode_sinogram(counts))
            progress = (k + 1) / settings.n_realizations * 100
            yield RunProgress(
                "simulate",
                StageState(
                    "active",
                    progress,
                    f"Realization {k + 1}/{settings.n_realizations} ({counts.total:.3g} counts)",
                ),
            )

        await _write(out_dir / "background.drsn", encode_sinogram(background))
        await _write_bundle(out_dir, test)
        manifest = RunManifest(
            command="simulate",
            config_text=loaded.text,
            master_seed=seed,
            seeds=seeds,
            geometry=_geometry_record(test.activity.grid, config),
            settings=dataclasses.asdict(settings),
            inputs={"phantom": str(phantom_dir)},
            outputs=sorted(seeds) + ["background.drsn"],
            count_scale=scale,
        )
        await _write(out_dir / MANIFEST_NAME, manifest_json(manifest))
        yield RunProgress("simulate", StageState("complete", 100.0, "✓ Realizations written"))
        yield RunComplete(
            f"{settings.n_realizations} realizations at {settings.count_target:.3g} counts\n"
            f"Count scale: {scale:.6g}\n"
            f"Output: {out_dir}",
            outputs=[out_dir],
        )
    except DiffreconError as e:
        yield RunError(str(e), "simulate")
    except Exception as e:
        logger.error(f"Simulation failed: {e}", exc_info=True)
        yield RunError(str(e), "simulate")


# =============================================================================
# train
# =============================================================================


async def run_train(
    loaded: LoadedConfig, phantom_dir: Path, out_dir: Path, seed: int
) -> AsyncGenerator[RunEvent, None]:
    """Pretrain the conditional score network on the training set."""
    config = loaded.config
    train_config = config.train
    if train_config.rng_seed is None:
        train_config = dataclasses.replace(
            train_config, rng_seed=stream_seed(seed, TRAINING_STREAM)
        )
    loop = asyncio.get_running_loop()
    queue: asyncio.Queue[tuple[int, float]] = asyncio.Queue()
    curve: list[dict] = []

    def on_epoch(epoch: int, loss: float) -> None:
        loop.call_soon_threadsafe(queue.put_nowait, (epoch, loss))

    def progress_event(epoch: int, loss: float) -> RunProgress:
        curve.append({"epoch": epoch, "loss": loss})
        return RunProgress(
            "train",
            StageState(
                "active",
                epoch / config.train.epochs * 100,
                f"Epoch {epoch}/{config.train.epochs}: loss {loss:.4f}",
            ),
        )

    try:
        dataset = read_training_set(phantom_dir)
        sched = config.schedule.schedule()
        yield RunProgress(
            "train", StageState("active", 0.0, f"Training on {len(dataset)} samples...")
        )
        start = time.time()
        future = loop.run_in_executor(
            None, partial(train_score, dataset, train_config, sched, on_epoch=on_epoch)
        )
        while True:
            getter = asyncio.ensure_future(queue.get())
            done, _ = await asyncio.wait({future, getter}, return_when=asyncio.FIRST_COMPLETED)
            if getter in done:
                yield progress_event(*getter.result())
                continue
            getter.cancel()
            break
        while not queue.empty():
            yield progress_event(*queue.get_nowait())

        try:
            net = future.result()
        except DivergenceError as e:
            await _write(out_dir / "training_curve.csv", csv_text(e.diagnostics or curve))
            raise

        data = encode_checkpoint(net)
        checkpoint_hash = content_hash(data)
        await _write(out_dir / "checkpoint.drnn", data)
        await _write(out_dir / "training_curve.csv", csv_text(curve))
        if config.output.plots:
            plot_lines(
                out_dir / "training_curve.png",
                {"DSM loss": ([r["epoch"] for r in curve], [r["loss"] for r in curve])},
                "epoch",
                "loss",
                title="Score-model training",
            )
        manifest = RunManifest(
            command="train",
            config_text=loaded.text,
            master_seed=seed,
            seeds={"train": train_config.rng_seed},
            geometry=_geometry_record(dataset[0].activity.grid, config),
            schedule=sched.describe(),
            settings=dataclasses.asdict(train_config),
            checkpoint_sha256=checkpoint_hash,
            inputs={"phantom": str(phantom_dir)},
            outputs=["checkpoint.drnn", "training_curve.csv"],
        )
        await _write(out_dir / MANIFEST_NAME, manifest_json(manifest))
        yield RunProgress("train", StageState("complete", 100.0, "✓ Training finished"))
        yield RunComplete(
            f"ConvScoreNet hidden={net.hidden} time_dim={net.time_dim}\n"
            f"Final loss: {curve[-1]['loss']:.4f} after {len(curve)} epochs "
            f"({time.time() - start:.1f}s)\n"
            f"Checkpoint: {out_dir / 'checkpoint.drnn'} (sha256 {checkpoint_hash[:12]})",
            outputs=[out_dir / "checkpoint.drnn"],
        )
    except DiffreconError as e:
        yield RunError(str(e), "train")
    except Exception as e:
        logger.error(f"Training failed: {e}", exc_info=True)
        yield RunError(str(e), "train")


# =============================================================================
# recon and sweep
# =============================================================================


def sweep_specs(recipe: str, config: ExperimentConfig) -> list[RunSpec]:
    """Run directories produced by an experiment recipe."""
    metrics = config.metrics
    if recipe == "tprime-beta":
        return [
            RunSpec(
                f"ddip_tp{tp:04d}_beta{beta:g}",
                "ddip",
                recipe,
                "t_start",
                tp,
                {"t_start": tp, "beta": beta},
            )
            for tp in config.tprime_sweep()
            for beta in metrics.beta_values
        ]
    if recipe == "lora-rank":
        return [
            RunSpec(f"ddip_rank{r:02d}", "ddip", recipe, "lora_rank", r, {"lora_rank": r})
            for r in metrics.lora_ranks
        ]
    if recipe == "tradeoff":
        markers = tuple(int(m) for m in marker_protocol("mlem"))
        specs = [
            RunSpec("mlem", "mlem", recipe, markers=markers),
            RunSpec("mapem", "mapem", recipe, markers=markers),
        ]
        lambdas = metrics.lambda_values or marker_protocol("dps")
        specs += [
            RunSpec(f"dps_lambda{lam:g}", "dps", recipe, "lambda_step", lam, {"lambda_step": lam})
            for lam in lambdas
        ]
        tprimes = [int(tp) for tp in marker_protocol("ddip", config.schedule.T)]
        specs += [
            RunSpec(f"ddip_tp{tp:04d}", "ddip", recipe, "t_start", tp, {"t_start": tp})
            for tp in sorted(set(tprimes))
        ]
        return specs
    if recipe == "comparison":
        return [
            RunSpec(m, m, recipe) for m in ("mlem", "mapem", "dps", "ddip", "ddim-sample")
        ]
    raise ConfigurationError(f"Unknown recipe '{recipe}' (choose from {', '.join(RECIPES)})")


@dataclass
class _RunDir:
    """Bookkeeping for one run directory while its realizations complete."""

    spec: RunSpec
    task: ReconTask
    seeds: dict[str, int] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    adapter_hashes: list[str] = field(default_factory=list)


async def _write_output(
    directory: Path, grid: GridSpec, out: ReconOutput, key: int | None, png: bool
) -> list[str]:
    k = out.realization
    name = f"recon_{k:02d}"
    written = [f"{name}.drim"]
    await _write(directory / f"{name}.drim", encode_image(Image(grid, out.images[key])))
    if png:
        write_png(directory / f"{name}.png", out.images[key])
    if out.diagnostics:
        await _write(directory / f"diagnostics_{k:02d}.csv", csv_text(out.diagnostics))
        written.append(f"diagnostics_{k:02d}.csv")
    for t, snapshot in sorted(out.snapshots.items()):
        await _write(
            directory / "snapshots" / f"{name}_t{t:04d}.drim",
            encode_image(Image(grid, snapshot)),
        )
    if out.adapters is not None:
        await _write(directory / f"adapters_{k:02d}.drla", out.adapters)
        written.append(f"adapters_{k:02d}.drla")
    return written


async def _run_specs(
    loaded: LoadedConfig,
    command: str,
    specs: Sequence[RunSpec],
    data_dir: Path,
    checkpoint: Path | None,
    out_dir: Path,
    seed: int,
    jobs: int,
    n_realizations: int | None,
) -> AsyncGenerator[RunEvent, None]:
    config = loaded.config
    data = read_simulation(data_dir)
    grid = data.truth.grid
    n_real = min(n_realizations or config.metrics.realizations, data.n_realizations)

    checkpoint_hash = None
    if any(spec.method in NETWORK_METHODS for spec in specs):
        if checkpoint is None:
            raise ConfigurationError("Network methods need --checkpoint")
        checkpoint_hash = content_hash(await _read_bytes(checkpoint))

    runs: dict[str, _RunDir] = {}
    items = []
    for spec in specs:
        for k in range(n_real):
            task = ReconTask(
                method=spec.method,
                data_dir=str(data_dir),
                realization=k,
                config_text=loaded.text,
                seed=stream_seed(seed, RECONSTRUCTION_STREAMS + k),
                checkpoint=str(checkpoint) if spec.method in NETWORK_METHODS else None,
                overrides=dict(spec.overrides),
                markers=spec.markers,
            )
            items.append(((spec, k), task))
        for target in spec.targets().values():
            runs[target.name] = _RunDir(target, dataclasses.replace(items[-1][1], markers=()))

    total = len(items)
    yield RunProgress(
        command,
        StageState("active", 0.0, f"{total} reconstructions over {len(runs)} runs..."),
    )
    finished = 0
    async with aclosing(_execute(reconstruct, items, jobs)) as results:
        async for (spec, k), out in results:
            finished += 1
            if out.error is not None:
                if out.diagnostics:
                    await _write(
                        out_dir / spec.name / f"diagnostics_{k:02d}.csv",
                        csv_text(out.diagnostics),
                    )
                yield RunError(f"{spec.name} realization {k}: {out.error}", command)
                return
            for key, target in spec.targets().items():
                run = runs[target.name]
                run.seeds[f"recon_{k:02d}"] = stream_seed(seed, RECONSTRUCTION_STREAMS + k)
                written = await _write_output(
                    out_dir / target.name, grid, out, key, config.output.png
                )
                run.outputs.extend(written)
                if out.adapters is not None:
                    run.adapter_hashes.append(content_hash(out.adapters))
            yield RunProgress(
                command,
                StageState(
                    "active",
                    finished / total * 100,
                    f"{spec.name} realization {k} ({finished}/{total})",
                ),
            )

    for name, run in runs.items():
        spec = run.spec
        task = dataclasses.replace(run.task, overrides=dict(spec.overrides))
        manifest = RunManifest(
            command=command,
            method=spec.method,
            config_text=loaded.text,
            master_seed=seed,
            seeds=run.seeds,
            geometry=_geometry_record(grid, config),
            schedule=(
                config.schedule.schedule().describe() if spec.method in NETWORK_METHODS else None
            ),
            settings={
                "recipe": spec.recipe,
                "sweep_key": spec.sweep_key,
                "sweep_value": spec.sweep_value,
                "n_realizations": n_real,
                "method_settings": settings_record(task),
            },
            checkpoint_sha256=checkpoint_hash if spec.method in NETWORK_METHODS else None,
            adapter_sha256=",".join(run.adapter_hashes) or None,
            inputs={"data": str(data_dir)}
            | ({"checkpoint": str(checkpoint)} if spec.method in NETWORK_METHODS else {}),
            outputs=sorted(run.outputs),
            count_scale=data.count_scale,
        )
        await _write(out_dir / name / MANIFEST_NAME, manifest_json(manifest))

    yield RunProgress(command, StageState("complete", 100.0, f"✓ {len(runs)} runs written"))
    yield RunComplete(
        f"{total} reconstructions, {n_real} realizations per run\n"
        f"Runs: {', '.join(sorted(runs))}\n"
        f"Output: {out_dir}",
        outputs=[out_dir / name for name in sorted(runs)],
    )


async def run_recon(
    loaded: LoadedConfig,
    method: str,
    data_dir: Path,
    checkpoint: Path | None,
    out_dir: Path,
    seed: int,
    jobs: int = 1,
    n_realizations: int | None = None,
) -> AsyncGenerator[RunEvent, None]:
    """
    Reconstruct realizations of a simulation with one method into out_dir/<method>.

    Args:
        loaded: Parsed configuration and its text
        method: mlem, mapem, dps, ddip or ddim-sample
        data_dir: Simulation directory
        checkpoint: Score-model checkpoint (network methods only)
        out_dir: Parent of the run directory
        seed: Master seed; reconstruction k uses its own derived stream
        jobs: Worker processes across realizations
        n_realizations: Realizations to reconstruct (defaults to [metrics] realizations)

    Yields:
        Progress updates, completion, or error messages
    """
    try:
        async for event in _run_specs(
            loaded,
            "recon",
            [RunSpec(method, method)],
            data_dir,
            checkpoint,
            out_dir,
            seed,
            jobs,
            n_realizations,
        ):
            yield event
    except DiffreconError as e:
        yield RunError(str(e), "recon")
    except Exception as e:
        logger.error(f"Reconstruction failed: {e}", exc_info=True)
        yield RunError(str(e), "recon")


async def run_sweep(
    loaded: LoadedConfig,
    recipe: str,
    data_dir: Path,
    checkpoint: Path | None,
    out_dir: Path,
    seed: int,
    jobs: int = 1,
) -> AsyncGenerator[RunEvent, None]:
    """Run every reconstruction of an experiment recipe; `metrics` then summarizes them."""
    try:
        specs = sweep_specs(recipe, loaded.config)
        async for event in _run_specs(
            loaded, "sweep", specs, data_dir, checkpoint, out_dir, seed, jobs, None
        ):
            yield event
    except DiffreconError as e:
        yield RunError(str(e), "sweep")
    except Exception as e:
        logger.error(f"Sweep '{recipe}' failed: {e}", exc_info=True)
        yield RunError(str(e), "sweep")


# =============================================================================
# metrics
# =============================================================================


def _load_run(run_dir: Path, truth: Image, rois: RoiSet) -> RunMetrics:
    manifest = read_manifest(run_dir)
    if manifest.method is None:
        raise FormatError(f"{run_dir} is not a reconstruction run")
    paths = sorted(run_dir.glob("recon_*.drim"))
    if not paths:
        raise FormatError(f"No reconstructions in {run_dir}")
    images = [load_image(p).values for p in paths]
    return evaluate_run(run_dir.name, manifest.method, manifest.settings, images, truth, rois)


def _expand_run_dirs(run_dirs: Iterable[Path]) -> list[Path]:
    """Accept run directories or sweep directories that contain them."""
    expanded = []
    for d in run_dirs:
        if (d / MANIFEST_NAME).exists():
            expanded.append(d)
        else:
            expanded.extend(sorted(p.parent for p in d.glob(f"*/{MANIFEST_NAME}")))
    return expanded


async def _write_ensembles(
    out_dir: Path, runs: Sequence[RunMetrics], truth: Image, png: bool
) -> None:
    for run in runs:
        if len(run.images) < 2:
            continue
        stats = ensemble_stats([truth.like(im) for im in run.images], truth)
        for kind, image in (("mean", stats.mean), ("bias", stats.bias), ("std", stats.std)):
            path = out_dir / "ensemble" / f"{run.run_id}_{kind}.drim"
            await _write(path, encode_image(image))
            if png:
                write_png(path.with_suffix(".png"), image.values)


def _plots(out_dir: Path, runs, curves, grid_rows, ranks) -> None:
    if curves:
        plot_tradeoff(out_dir / "tradeoff.png", curves)
    if grid_rows:
        series: dict[str, tuple[list, list]] = {}
        for row in grid_rows:
            xs, ys = series.setdefault(f"T'={row['t_start']}", ([], []))
            xs.append(row["beta"])
            ys.append(row["psnr"])
        plot_lines(out_dir / "psnr_grid.png", series, "beta", "PSNR (dB)", logx=True)
    if ranks:
        plot_lines(
            out_dir / "lora_rank.png",
            {"DDIP": ([r["rank"] for r in ranks], [r["psnr"] for r in ranks])},
            "LoRA rank (0 = full fine-tuning)",
            "PSNR (dB)",
        )
    comparison = [run for run in runs if run.recipe == "comparison"]
    if comparison:
        plot_box(
            out_dir / "psnr_box.png",
            {run.method: [row["psnr"] for row in run.rows] for run in comparison},
            "PSNR (dB)",
        )


async def run_metrics(
    loaded: LoadedConfig, data_dir: Path, run_dirs: Sequence[Path], out_dir: Path
) -> AsyncGenerator[RunEvent, None]:
    """
    Score run directories against the simulation truth and check the desk-scale trends.

    Nothing is written unless every run directory loads.
    """
    config = loaded.config
    try:
        dirs = _expand_run_dirs(run_dirs)
        if not dirs:
            yield RunError("No run directories given", "metrics")
            return
        data = read_simulation(data_dir)
        truth = data.truth
        rois = RoiSet.from_tissue(data.masks)

        runs = []
        for i, run_dir in enumerate(dirs):
            runs.append(_load_run(run_dir, truth, rois))
            yield RunProgress(
                "metrics",
                StageState("active", (i + 1) / len(dirs) * 100, f"Scored {run_dir.name}"),
            )

        rows = [row for run in runs for row in run.rows]
        fieldnames = [
            "run_id", "method", "recipe", "sweep_value", "realization", "psnr", "contrast", "cv",
            "cr",
        ]
        await _write(out_dir / "metrics.csv", csv_text(rows, fieldnames))

        curves = tradeoff_curves(runs, truth, rois)
        grid_rows = psnr_grid_rows(runs)
        ranks = rank_rows(runs)
        if curves:
            await _write(out_dir / "curves.csv", csv_text(curve_rows(curves)))
        if grid_rows:
            await _write(out_dir / "psnr_grid.csv", csv_text(grid_rows))
        if ranks:
            await _write(out_dir / "lora_rank.csv", csv_text(ranks))
        await _write_ensembles(out_dir, runs, truth, config.output.png)
        if config.output.plots:
            _plots(out_dir, runs, curves, grid_rows, ranks)

        checks = acceptance_checks(runs, curves, config.recon.ddip.t_start, config.schedule.T)
        await _write(
            out_dir / "checks.csv",
            csv_text([dataclasses.asdict(c) for c in checks]),
        )
        manifest = RunManifest(
            command="metrics",
            config_text=loaded.text,
            master_seed=config.seed,
            inputs={"data": str(data_dir)} | {d.name: str(d) for d in dirs},
            outputs=["metrics.csv", "checks.csv"],
            count_scale=data.count_scale,
        )
        await _write(out_dir / MANIFEST_NAME, manifest_json(manifest))

        best = max(runs, key=lambda run: run.mean("psnr"))
        yield RunProgress("metrics", StageState("complete", 100.0, f"✓ {len(runs)} runs scored"))
        yield RunComplete(
            f"{len(runs)} runs, {len(rows)} reconstructions\n"
            f"Best mean PSNR: {best.run_id} ({best.mean('psnr'):.2f} dB)\n"
            f"Output: {out_dir}",
            outputs=[out_dir / "metrics.csv"],
            checks=checks,
        )
    except DiffreconError as e:
        yield RunError(str(e), "metrics")
    except Exception as e:
        logger.error(f"Metrics failed: {e}", exc_info=True)
        yield RunError(str(e), "metrics")
