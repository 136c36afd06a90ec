"""CSV tables, PNG previews and simple line/box plots for human inspection."""

import csv
import io
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from skimage.io import imsave  # noqa: E402

from diffrecon.errors import ConfigurationError  # noqa: E402
from diffrecon.metrics.models import CurvePoint  # noqa: E402


logger = logging.getLogger(__name__)


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Min-max window to 0..255; a constant image maps to 0."""
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.uint8)
    return np.round((values - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_png(path: Path, values: np.ndarray) -> None:
    imsave(str(path), to_uint8(np.asarray(values)), check_contrast=False)


def csv_text(rows: Sequence[Mapping], fieldnames: Sequence[str] | None = None) -> str:
    if not rows:
        raise ConfigurationError("No rows to write")
    fieldnames = list(fieldnames or rows[0].keys())
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    logger.debug(f"Wrote plot {path}")


def plot_lines(
    path: Path,
    series: Mapping[str, tuple[Sequence[float], Sequence[float]]],
    xlabel: str,
    ylabel: str,
    title: str = "",
    logx: bool = False,
) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, (xs, ys) in series.items():
        ax.plot(xs, ys, marker="o", label=label)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    _save(fig, path)


def plot_tradeoff(path: Path, curves: Mapping[str, Sequence[CurvePoint]]) -> None:
    """CV against %contrast, one line per method."""
    plot_lines(
        path,
        {
            method: ([p.percent_contrast for p in points], [p.cv for p in points])
            for method, points in curves.items()
        },
        xlabel="%contrast",
        ylabel="CV",
        title="Contrast-noise tradeoff",
    )


def plot_box(path: Path, groups: Mapping[str, Sequence[float]], ylabel: str) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.boxplot(list(groups.values()))
    ax.set_xticks(range(1, len(groups) + 1), list(groups.keys()))
    ax.set_ylabel(ylabel)
    _save(fig, path)
