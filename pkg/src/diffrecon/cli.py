"""Command-line interface for diffrecon - desk-scale PET reconstruction experiments."""

import asyncio
import logging
import sys
from collections.abc import AsyncIterator
from pathlib import Path

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.progress import (
    BarColumn,
    Progress,
    SpinnerColumn,
    TaskProgressColumn,
    TextColumn,
)
from rich.table import Table

from diffrecon import __version__
from diffrecon.config import LoadedConfig, load_config
from diffrecon.errors import ConfigurationError
from diffrecon.metrics.report import CheckResult
from diffrecon.runner import (
    RECIPES,
    RunComplete,
    RunError,
    RunEvent,
    RunProgress,
    run_metrics,
    run_phantom,
    run_recon,
    run_simulate,
    run_sweep,
    run_train,
)
from diffrecon.tasks import METHODS, configure_threads

console = Console()


def _setup(config_path: Path | None, verbose: bool) -> LoadedConfig:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
    )
    try:
        configure_threads()
        return load_config(config_path)
    except ConfigurationError as e:
        console.print(f"[bold red]✗ Configuration error:[/] {e}")
        sys.exit(1)


def _checks_table(checks: list[CheckResult]) -> Table:
    table = Table(title="Trend checks")
    table.add_column("Check", style="cyan")
    table.add_column("Result", justify="center")
    table.add_column("Detail", style="dim")
    for check in checks:
        if check.passed is None:
            result = "[yellow]skipped[/]"
        elif check.passed:
            result = "[green]pass[/]"
        else:
            result = "[red]fail[/]"
        table.add_row(check.name, result, check.detail)
    return table


async def _render(events: AsyncIterator[RunEvent], title: str, quiet: bool) -> None:
    """Show progress for each stage, then the summary panel; exit 1 on an error event."""
    stage_tasks = {}

    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        console=console,
        disable=quiet,
    ) as progress:
        async for event in events:
            if isinstance(event, RunProgress):
                stage = event.stage
                state = event.state

                if stage not in stage_tasks:
                    stage_tasks[stage] = progress.add_task(
                        f"[cyan]{stage.title()}[/]", total=100
                    )

                progress.update(
                    stage_tasks[stage],
                    completed=state.progress,
                    description=f"[cyan]{stage.title()}:[/] {state.detail}",
                )

            elif isinstance(event, RunComplete):
                progress.stop()
                if quiet:
                    console.print(f"✓ {title} → {', '.join(str(p) for p in event.outputs)}")
                else:
                    console.print()
                    console.print(
                        Panel(
                            event.summary_text,
                            title=f"[bold green]✓ {title} Complete[/]",
                            border_style="green",
                        )
                    )
                if event.checks:
                    console.print(_checks_table(event.checks))
                return

            elif isinstance(event, RunError):
                progress.stop()
                console.print()
                console.print(f"[bold red]✗ Error during {event.stage}:[/] {event.error}")
                sys.exit(1)


def _seed(loaded: LoadedConfig, seed: int | None) -> int:
    return loaded.config.seed if seed is None else seed


config_option = click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Experiment configuration (TOML); defaults apply when omitted",
)
seed_option = click.option("--seed", type=int, help="Master seed (overrides the config)")
out_option = click.option(
    "-o", "--out", type=click.Path(path_type=Path), required=True, help="Output directory"
)
jobs_option = click.option(
    "-j", "--jobs", type=click.IntRange(min=1), default=1, help="Worker processes"
)
verbose_option = click.option("-v", "--verbose", is_flag=True, help="Debug logging")
quiet_option = click.option("-q", "--quiet", is_flag=True, help="Only show the summary")
checkpoint_option = click.option(
    "--checkpoint",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Score-model checkpoint (dps, ddip, ddim-sample)",
)


@click.group()
@click.version_option(version=__version__, prog_name="diffrecon")
def cli():
    """diffrecon - PET reconstruction with a fine-tuned diffusion prior.

    Generate phantoms, simulate noisy sinograms, pretrain the score model,
    reconstruct with MLEM, MAPEM, DPS or DDIP, and score the results.
    """
    pass


@cli.command()
@config_option
@seed_option
@out_option
@verbose_option
@quiet_option
def phantom(config_path: Path | None, seed: int | None, out: Path, verbose: bool, quiet: bool):
    """Write the training phantoms and the test phantom.

    Example:
        diffrecon phantom --config desk.toml -o phantoms
    """
    loaded = _setup(config_path, verbose)
    asyncio.run(_render(run_phantom(loaded, out, _seed(loaded, seed)), "Phantoms", quiet))


@cli.command()
@click.argument("phantom_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@config_option
@seed_option
@out_option
@verbose_option
@quiet_option
def simulate(
    phantom_dir: Path,
    config_path: Path | None,
    seed: int | None,
    out: Path,
    verbose: bool,
    quiet: bool,
):
    """Simulate noisy sinograms of the test phantom.

    PHANTOM_DIR: Output of `diffrecon phantom`

    Example:
        diffrecon simulate phantoms --config desk.toml -o data
    """
    loaded = _setup(config_path, verbose)
    asyncio.run(
        _render(
            run_simulate(loaded, phantom_dir, out, _seed(loaded, seed)), "Simulation", quiet
        )
    )


@cli.command()
@click.argument("phantom_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@config_option
@seed_option
@out_option
@verbose_option
@quiet_option
def train(
    phantom_dir: Path,
    config_path: Path | None,
    seed: int | None,
    out: Path,
    verbose: bool,
    quiet: bool,
):
    """Pretrain the MR-conditioned score network on the training phantoms.

    PHANTOM_DIR: Output of `diffrecon phantom`

    Example:
        diffrecon train phantoms --config desk.toml -o model
    """
    loaded = _setup(config_path, verbose)
    asyncio.run(
        _render(run_train(loaded, phantom_dir, out, _seed(loaded, seed)), "Training", quiet)
    )


@cli.command()
@click.argument("data_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option(
    "-m", "--method", type=click.Choice(METHODS), required=True, help="Reconstruction method"
)
@checkpoint_option
@click.option(
    "-n",
    "--realizations",
    type=click.IntRange(min=1),
    help="Realizations to reconstruct (defaults to [metrics] realizations)",
)
@config_option
@seed_option
@out_option
@jobs_option
@verbose_option
@quiet_option
def recon(
    data_dir: Path,
    method: str,
    checkpoint: Path | None,
    realizations: int | None,
    config_path: Path | None,
    seed: int | None,
    out: Path,
    jobs: int,
    verbose: bool,
    quiet: bool,
):
    """Reconstruct simulated realizations with one method.

    DATA_DIR: Output of `diffrecon simulate`

    Example:
        diffrecon recon data -m mlem -o runs
        diffrecon recon data -m ddip --checkpoint model/checkpoint.drnn -o runs -j 4
    """
    loaded = _setup(config_path, verbose)
    events = run_recon(
        loaded, method, data_dir, checkpoint, out, _seed(loaded, seed), jobs, realizations
    )
    asyncio.run(_render(events, "Reconstruction", quiet))


@cli.command()
@click.argument("recipe", type=click.Choice(RECIPES))
@click.argument("data_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@checkpoint_option
@config_option
@seed_option
@out_option
@jobs_option
@verbose_option
@quiet_option
def sweep(
    recipe: str,
    data_dir: Path,
    checkpoint: Path | None,
    config_path: Path | None,
    seed: int | None,
    out: Path,
    jobs: int,
    verbose: bool,
    quiet: bool,
):
    """Run an experiment recipe: one run directory per sweep point.

    RECIPE: tprime-beta, lora-rank, tradeoff or comparison
    DATA_DIR: Output of `diffrecon simulate`

    Example:
        diffrecon sweep comparison data --checkpoint model/checkpoint.drnn -o runs/comparison
    """
    loaded = _setup(config_path, verbose)
    events = run_sweep(loaded, recipe, data_dir, checkpoint, out, _seed(loaded, seed), jobs)
    asyncio.run(_render(events, f"Sweep '{recipe}'", quiet))


@cli.command()
@click.argument("data_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument(
    "run_dirs", nargs=-1, type=click.Path(exists=True, file_okay=False, path_type=Path)
)
@config_option
@out_option
@verbose_option
@quiet_option
def metrics(
    data_dir: Path,
    run_dirs: tuple[Path, ...],
    config_path: Path | None,
    out: Path,
    verbose: bool,
    quiet: bool,
):
    """Score run directories against the simulation truth.

    DATA_DIR: Output of `diffrecon simulate` (holds the truth)
    RUN_DIRS: Run directories, or sweep directories containing them

    Example:
        diffrecon metrics data runs/comparison runs/tradeoff -o report
    """
    loaded = _setup(config_path, verbose)
    asyncio.run(_render(run_metrics(loaded, data_dir, list(run_dirs), out), "Metrics", quiet))


def main():
    """Entry point for the CLI."""
    cli()


if __name__ == "__main__":
    main()
