"""Per-run metric tables, sweep summaries and the desk-scale trend checks."""

import logging
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from diffrecon.geometry.models import Image
from diffrecon.metrics.ensemble import contrast_cv_curve, dominates
from diffrecon.metrics.models import CurvePoint, RoiSet
from diffrecon.metrics.quantify import contrast_recovery, cv, percent_contrast, psnr


logger = logging.getLogger(__name__)

BETA_STABILITY_RANGE = (1e-3, 1e-1)
BETA_STABILITY_DB = 1.0
OOD_MARGIN_DB = 1.0
# T' values, as fractions of T, on which the interior-optimum check is judged
TPRIME_CHECK_FRACTIONS = (0.05, 0.25, 1.0)


def scaled_tprimes(fractions: Sequence[float], T: int) -> list[int]:
    """Distinct T' values round(f * T), at least 1, ascending."""
    return sorted({max(1, round(f * T)) for f in fractions})


@dataclass
class RunMetrics:
    """Metrics of one run directory: one row per realization."""

    run_id: str
    method: str
    recipe: str | None
    sweep_key: str | None
    sweep_value: float | None
    settings: dict[str, Any]
    images: list[np.ndarray] = field(default_factory=list, repr=False)
    rows: list[dict] = field(default_factory=list)

    def mean(self, key: str) -> float:
        return float(np.mean([row[key] for row in self.rows]))


def evaluate_run(
    run_id: str,
    method: str,
    settings: dict[str, Any],
    images: Sequence[np.ndarray],
    truth: Image,
    rois: RoiSet,
) -> RunMetrics:
    """PSNR, %contrast, WM CV and putamen contrast recovery for each realization image."""
    run = RunMetrics(
        run_id=run_id,
        method=method,
        recipe=settings.get("recipe"),
        sweep_key=settings.get("sweep_key"),
        sweep_value=settings.get("sweep_value"),
        settings=settings,
        images=list(images),
    )
    putamen = rois.get("putamen")
    for k, image in enumerate(images):
        run.rows.append(
            {
                "run_id": run_id,
                "method": method,
                "recipe": run.recipe or "",
                "sweep_value": "" if run.sweep_value is None else run.sweep_value,
                "realization": k,
                "psnr": psnr(truth, image),
                "contrast": percent_contrast(image, truth, rois),
                "cv": cv(image, rois),
                "cr": contrast_recovery(image, truth, putamen),
            }
        )
    return run


def tradeoff_curves(
    runs: Sequence[RunMetrics], truth: Image, rois: RoiSet
) -> dict[str, list[CurvePoint]]:
    """%contrast-CV curves per method from the tradeoff recipe runs."""
    grouped: dict[str, list[tuple[float, list[np.ndarray]]]] = defaultdict(list)
    for run in runs:
        if run.recipe == "tradeoff" and run.sweep_value is not None:
            grouped[run.method].append((run.sweep_value, run.images))
    return {method: contrast_cv_curve(points, truth, rois) for method, points in grouped.items()}


def curve_rows(curves: dict[str, list[CurvePoint]]) -> list[dict]:
    return [
        {
            "method": method,
            "sweep_value": p.sweep_value,
            "percent_contrast": p.percent_contrast,
            "cv": p.cv,
        }
        for method, points in curves.items()
        for p in points
    ]


def psnr_grid_rows(runs: Sequence[RunMetrics]) -> list[dict]:
    """Mean PSNR per (T', beta) from the tprime-beta recipe."""
    rows = []
    for run in runs:
        if run.recipe != "tprime-beta":
            continue
        method_settings = run.settings.get("method_settings", {})
        rows.append(
            {
                "t_start": method_settings.get("t_start"),
                "beta": method_settings.get("beta"),
                "psnr": run.mean("psnr"),
            }
        )
    return sorted(rows, key=lambda r: (r["t_start"], r["beta"]))


def rank_rows(runs: Sequence[RunMetrics]) -> list[dict]:
    """Mean PSNR per LoRA rank from the lora-rank recipe."""
    rows = [
        {"rank": int(run.sweep_value), "psnr": run.mean("psnr")}
        for run in runs
        if run.recipe == "lora-rank" and run.sweep_value is not None
    ]
    return sorted(rows, key=lambda r: r["rank"])


# =============================================================================
# Trend checks
# =============================================================================


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool | None
    detail: str


def _by_method(runs: Sequence[RunMetrics], recipe: str) -> dict[str, RunMetrics]:
    return {run.method: run for run in runs if run.recipe == recipe}


def check_ood(runs: Sequence[RunMetrics]) -> CheckResult:
    name = "DDIP beats MLEM and DPS out of distribution"
    comparison = _by_method(runs, "comparison")
    if not {"ddip", "mlem", "dps"} <= comparison.keys():
        return CheckResult(name, None, "needs the comparison recipe")
    ddip, mlem, dps = (comparison[m].mean("psnr") for m in ("ddip", "mlem", "dps"))
    passed = ddip >= mlem + OOD_MARGIN_DB and ddip >= dps
    return CheckResult(
        name, passed, f"PSNR ddip {ddip:.2f}, mlem {mlem:.2f}, dps {dps:.2f} dB"
    )


def check_tprime_beta(grid: Sequence[dict], T: int | None = None) -> list[CheckResult]:
    """
    Interior-optimum and beta-stability checks on the tprime-beta PSNR grid.

    With T given and every T' of TPRIME_CHECK_FRACTIONS (0.05T, 0.25T, T) in the
    grid, the shape check passes only if the middle value is strictly best among
    those three. Otherwise it falls back to the whole grid: the best T' must be
    neither the smallest nor the largest of at least three values.
    """
    shape = "Interior T' gives the best PSNR"
    stable = "PSNR stable across beta in [1e-3, 1e-1]"
    if not grid:
        return [
            CheckResult(shape, None, "needs the tprime-beta recipe"),
            CheckResult(stable, None, "needs the tprime-beta recipe"),
        ]
    by_tprime: dict[int, list[dict]] = defaultdict(list)
    for row in grid:
        by_tprime[row["t_start"]].append(row)
    best_psnr = {tp: max(r["psnr"] for r in rows) for tp, rows in by_tprime.items()}

    judged = sorted(by_tprime)
    checkpoints = [] if T is None else scaled_tprimes(TPRIME_CHECK_FRACTIONS, T)
    on_checkpoints = len(checkpoints) == 3 and set(checkpoints) <= by_tprime.keys()
    if on_checkpoints:
        judged = checkpoints
    best = max(judged, key=lambda tp: best_psnr[tp])
    if on_checkpoints:
        low, middle, high = (best_psnr[tp] for tp in judged)
        interior = middle > low and middle > high
    else:
        interior = len(judged) >= 3 and best not in (judged[0], judged[-1])
    results = [
        CheckResult(
            shape,
            interior,
            "best T'=" + str(best) + " of " + ", ".join(str(tp) for tp in judged),
        )
    ]
    lo, hi = BETA_STABILITY_RANGE
    in_range = [r["psnr"] for r in by_tprime[best] if lo <= r["beta"] <= hi]
    if len(in_range) < 2:
        results.append(CheckResult(stable, None, "fewer than two beta values in range"))
    else:
        spread = max(in_range) - min(in_range)
        results.append(
            CheckResult(stable, spread < BETA_STABILITY_DB, f"spread {spread:.2f} dB at T'={best}")
        )
    return results


def check_lora(ranks: Sequence[dict]) -> CheckResult:
    name = "LoRA r=4 beats full fine-tuning"
    by_rank = {r["rank"]: r["psnr"] for r in ranks}
    if 0 not in by_rank or 4 not in by_rank:
        return CheckResult(name, None, "needs ranks 0 and 4 from the lora-rank recipe")
    return CheckResult(
        name, by_rank[0] < by_rank[4], f"r=0 {by_rank[0]:.2f} dB, r=4 {by_rank[4]:.2f} dB"
    )


def check_tradeoff(curves: dict[str, list[CurvePoint]], default_tprime: int) -> CheckResult:
    name = "DDIP point below the MLEM tradeoff curve"
    if "mlem" not in curves or "ddip" not in curves:
        return CheckResult(name, None, "needs the tradeoff recipe")
    points = [p for p in curves["ddip"] if p.sweep_value == default_tprime]
    if not points:
        return CheckResult(name, None, f"no DDIP marker at T'={default_tprime}")
    point = points[0]
    passed = dominates(point, curves["mlem"])
    return CheckResult(
        name, passed, f"DDIP ({point.percent_contrast:.1f}%, CV {point.cv:.3f})"
    )


def acceptance_checks(
    runs: Sequence[RunMetrics],
    curves: dict[str, list[CurvePoint]],
    default_tprime: int,
    T: int | None = None,
) -> list[CheckResult]:
    checks = [check_ood(runs)]
    checks.extend(check_tprime_beta(psnr_grid_rows(runs), T))
    checks.append(check_lora(rank_rows(runs)))
    checks.append(check_tradeoff(curves, default_tprime))
    for c in checks:
        logger.info(f"check '{c.name}': {c.passed} ({c.detail})")
    return checks
